#include "adenet/cli.hpp"

int main(int argc, char** argv) { return adenet::cli::run(argc, argv); }
