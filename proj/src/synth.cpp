#include "adenet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "adenet/error.hpp"
#include "adenet/parallel.hpp"
#include "adenet/rng.hpp"

namespace adenet::data {
namespace {

struct Rgb {
  double r, g, b;
};

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

struct BoxAccumulator {
  std::size_t x0 = SIZE_MAX, y0 = SIZE_MAX, x1 = 0, y1 = 0;
  bool any = false;
  void add(std::size_t x, std::size_t y) {
    x0 = std::min(x0, x), y0 = std::min(y0, y), x1 = std::max(x1, x), y1 = std::max(y1, y);
    any = true;
  }
  BBox box() const { return any ? BBox{x0, y0, x1 - x0 + 1, y1 - y0 + 1} : BBox{}; }
};

// Insulator geometry in its own frame: u runs along the rod, v across it.
struct Insulator {
  double cx, cy, dir_x, dir_y;
  double half_width, half_height, spacing;
  double scale;  // pixels per unit of the 64-pixel reference layout
  int discs;
  Rgb ceramic;

  double disc_center(int i) const { return (i - (discs - 1) / 2.0) * spacing; }
  void frame(double px, double py, double& u, double& v) const {
    const double rx = px - cx, ry = py - cy;
    u = rx * dir_x + ry * dir_y;
    v = rx * dir_y - ry * dir_x;
  }
  // Disc index covering (u, v), or -1.
  int disc_at(double u, double v) const {
    for (int i = 0; i < discs; ++i) {
      const double du = (u - disc_center(i)) / half_height, dv = v / half_width;
      if (du * du + dv * dv <= 1.0) return i;
    }
    return -1;
  }
  bool on_rod(double u, double v) const {
    const double end = disc_center(discs - 1) + half_height + 2.0 * scale;
    return std::abs(v) <= scale && std::abs(u) <= end;
  }
};

void paint_background(Image& img, Rng& rng) {
  const Rgb top{rng.uniform(110, 190), rng.uniform(135, 205), rng.uniform(165, 235)};
  const Rgb bottom{top.r * rng.uniform(0.8, 1.05), top.g * rng.uniform(0.8, 1.05), top.b * rng.uniform(0.75, 1.0)};
  const double size = static_cast<double>(img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    const double t = static_cast<double>(y) / size;
    for (std::size_t x = 0; x < img.width; ++x) {
      const double noise = rng.uniform(-7, 7);
      img.at(x, y, 0) = to_byte(top.r + (bottom.r - top.r) * t + noise);
      img.at(x, y, 1) = to_byte(top.g + (bottom.g - top.g) * t + noise);
      img.at(x, y, 2) = to_byte(top.b + (bottom.b - top.b) * t + noise);
    }
  }
  // A few power-line conductors crossing the frame.
  const int wires = rng.range(0, 2);
  for (int k = 0; k < wires; ++k) {
    const double y0 = rng.uniform(0, size), slope = rng.uniform(-0.3, 0.3), shade = rng.uniform(40, 80);
    for (std::size_t x = 0; x < img.width; ++x) {
      const auto y = static_cast<long>(std::lround(y0 + slope * static_cast<double>(x)));
      if (y < 0 || y >= static_cast<long>(img.height)) continue;
      for (std::size_t ch = 0; ch < 3; ++ch) img.at(x, static_cast<std::size_t>(y), ch) = to_byte(shade);
    }
  }
}

Insulator place_insulator(std::size_t image_size, Rng& rng) {
  static const Rgb kPalette[] = {{225, 222, 210}, {150, 88, 48}, {160, 172, 182}, {205, 190, 160}};
  Insulator ins{};
  ins.scale = static_cast<double>(image_size) / 64.0 * rng.uniform(0.9, 1.15);
  ins.discs = rng.range(5, 7);
  ins.half_width = rng.uniform(6.5, 9.5) * ins.scale;
  ins.half_height = rng.uniform(1.8, 2.6) * ins.scale;
  ins.spacing = rng.uniform(4.3, 5.3) * ins.scale;
  const double angle = rng.uniform(-0.45, 0.45);
  ins.dir_x = std::sin(angle);
  ins.dir_y = std::cos(angle);
  const Rgb base = kPalette[rng.below(4)];
  const double tint = rng.uniform(0.88, 1.08);
  ins.ceramic = {base.r * tint, base.g * tint, base.b * tint};

  const double half_len = ins.disc_center(ins.discs - 1) + ins.half_height + 2.0 * ins.scale;
  const double ext_x = std::abs(ins.dir_x) * half_len + std::abs(ins.dir_y) * ins.half_width;
  const double ext_y = std::abs(ins.dir_y) * half_len + std::abs(ins.dir_x) * ins.half_width;
  const double size = static_cast<double>(image_size);
  ins.cx = rng.uniform(ext_x + 2.0, size - ext_x - 2.0);
  ins.cy = rng.uniform(ext_y + 2.0, size - ext_y - 2.0);
  return ins;
}

}  // namespace

std::string defect_name(DefectKind kind) {
  switch (kind) {
    case DefectKind::kMissingDisc: return "missing_disc";
    case DefectKind::kFlashover: return "flashover";
    case DefectKind::kFracture: return "fracture";
  }
  return "unknown";
}

DefectKind parse_defect(const std::string& name) {
  for (auto kind : {DefectKind::kMissingDisc, DefectKind::kFlashover, DefectKind::kFracture})
    if (defect_name(kind) == name) return kind;
  throw ArgumentError("unknown defect kind '" + name + "'");
}

RenderedSample render_sample(std::size_t image_size, bool damaged, DefectKind kind, std::uint64_t seed) {
  if (image_size < 48) throw ArgumentError("synth: image_size must be at least 48");
  Rng rng(seed);
  RenderedSample sample;
  sample.label = damaged ? kDamaged : kUndamaged;
  Image& img = sample.image;
  img = Image(image_size, image_size);
  paint_background(img, rng);
  const Insulator ins = place_insulator(image_size, rng);

  // Defect parameters are drawn up front so undamaged and damaged samples
  // consume the generator identically up to this point.
  const int target = damaged && kind == DefectKind::kMissingDisc ? rng.range(1, ins.discs - 2) : rng.range(0, ins.discs - 1);
  const double blot_v = rng.uniform(-0.5, 0.5) * ins.half_width;
  struct Blob {
    double du, dv, radius;
  };
  std::vector<Blob> blobs;
  const int blob_count = rng.range(3, 4);
  const double k_scale = ins.scale;
  for (int k = 0; k < blob_count; ++k)
    blobs.push_back({rng.uniform(-2.0, 2.0) * k_scale, rng.uniform(-2.5, 2.5) * k_scale, rng.uniform(1.4, 2.6) * k_scale});
  const double crack_side = rng.uniform() < 0.5 ? -1.0 : 1.0;
  std::vector<double> crack_jitter;
  for (int k = 0; k < 4; ++k) crack_jitter.push_back(rng.uniform(-0.9, 0.9) * k_scale);
  const double soot = rng.uniform(30, 60);

  BoxAccumulator insulator_box, defect_box;
  const Rgb rod{88, 88, 94};
  for (std::size_t y = 0; y < image_size; ++y) {
    for (std::size_t x = 0; x < image_size; ++x) {
      double u, v;
      ins.frame(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5, u, v);
      const int disc = ins.disc_at(u, v);
      const bool rod_here = ins.on_rod(u, v);
      if (disc < 0 && !rod_here) continue;
      insulator_box.add(x, y);

      std::optional<Rgb> color;
      if (disc >= 0 && !(damaged && kind == DefectKind::kMissingDisc && disc == target)) {
        const double du = (u - ins.disc_center(disc)) / ins.half_height;
        double shade = 0.72 + 0.38 * (1.0 - std::abs(v) / ins.half_width);
        if (du > 0.45) shade *= 0.8;
        color = Rgb{ins.ceramic.r * shade, ins.ceramic.g * shade, ins.ceramic.b * shade};

        if (damaged && disc == target && kind == DefectKind::kFlashover) {
          for (const Blob& b : blobs) {
            const double bu = u - ins.disc_center(disc) - b.du, bv = v - blot_v - b.dv;
            if (bu * bu + bv * bv <= b.radius * b.radius) {
              color = Rgb{soot + 8, soot, soot - 6};
              defect_box.add(x, y);
              break;
            }
          }
        }
        if (damaged && disc == target && kind == DefectKind::kFracture) {
          // Chipped rim on one side plus a jagged crack toward the centre.
          const double across = v * crack_side / ins.half_width;
          const double along = u - ins.disc_center(disc);
          if (across > 0.62 && along < 0.2 * k_scale) {
            color.reset();
            defect_box.add(x, y);
          } else if (across > -0.1) {
            const std::size_t seg = std::min<std::size_t>(3, static_cast<std::size_t>((across + 0.1) / 0.18));
            if (std::abs(along - crack_jitter[seg]) < 0.55 * k_scale) {
              color = Rgb{35, 30, 26};
              defect_box.add(x, y);
            }
          }
        }
      } else if (damaged && kind == DefectKind::kMissingDisc && disc == target) {
        defect_box.add(x, y);
      }
      if (!color && rod_here) color = rod;
      if (!color) continue;
      const double noise = rng.uniform(-5, 5);
      img.at(x, y, 0) = to_byte(color->r + noise);
      img.at(x, y, 1) = to_byte(color->g + noise);
      img.at(x, y, 2) = to_byte(color->b + noise);
    }
  }
  sample.insulator = insulator_box.box();
  if (damaged) {
    if (!defect_box.any) defect_box = insulator_box;
    DefectAnnotation a;
    a.kind = kind;
    a.bbox = defect_box.box();
    sample.defect = a;
  }
  return sample;
}

SynthResult synth_dataset(const SynthConfig& config, std::uint64_t seed, const std::filesystem::path& out_dir) {
  if (config.n_images == 0) throw ArgumentError("synth: n_images must be positive");
  if (!(config.damaged_ratio >= 0.0 && config.damaged_ratio <= 1.0)) throw ArgumentError("synth: damaged_ratio must be in [0, 1]");
  if (config.defect_kinds.empty()) throw ArgumentError("synth: at least one defect kind is required");

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw DataError("synth: cannot create " + (out_dir / "images").string() + ": " + ec.message());

  const auto n_damaged = static_cast<std::size_t>(std::llround(config.damaged_ratio * static_cast<double>(config.n_images)));
  std::vector<int> labels(config.n_images, kUndamaged);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_damaged), kDamaged);
  Rng rng(seed);
  rng.shuffle(labels);
  std::vector<DefectKind> kinds(config.n_images);
  for (auto& k : kinds) k = config.defect_kinds[rng.below(config.defect_kinds.size())];

  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.records.resize(config.n_images);
  std::vector<std::optional<DefectAnnotation>> defects(config.n_images);
  parallel_for(config.n_images, [&](std::size_t i) {
    RenderedSample s = render_sample(config.image_size, labels[i] == kDamaged, kinds[i], derive_seed(seed, i));
    char name[32];
    std::snprintf(name, sizeof name, "img_%05zu.png", i);
    const auto rel = std::filesystem::path("images") / name;
    save_png(s.image, out_dir / rel);
    manifest.records[i] = {rel, s.insulator, s.label};
    if (s.defect) {
      s.defect->record_index = i;
      defects[i] = s.defect;
    }
  });

  SynthResult result;
  result.manifest = out_dir / kManifestName;
  result.sidecar = out_dir / kSidecarName;
  write_manifest(manifest, result.manifest);
  std::ofstream side(result.sidecar, std::ios::trunc);
  if (!side) throw DataError("synth: cannot write " + result.sidecar.string());
  for (const auto& d : defects) {
    if (!d) continue;
    nlohmann::ordered_json line;
    line["record_index"] = d->record_index;
    line["defect_bbox"] = {d->bbox.x, d->bbox.y, d->bbox.w, d->bbox.h};
    line["kind"] = defect_name(d->kind);
    side << line.dump() << '\n';
  }
  result.damaged = n_damaged;
  result.undamaged = config.n_images - n_damaged;
  return result;
}

std::vector<DefectAnnotation> load_defect_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open defect sidecar " + path.string());
  std::vector<DefectAnnotation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DefectAnnotation a;
      a.record_index = j.at("record_index").get<std::size_t>();
      const auto& b = j.at("defect_bbox");
      a.bbox = {b.at(0).get<std::size_t>(), b.at(1).get<std::size_t>(), b.at(2).get<std::size_t>(), b.at(3).get<std::size_t>()};
      if (j.contains("kind")) a.kind = parse_defect(j["kind"].get<std::string>());
      out.push_back(a);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("defect sidecar line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace adenet::data
