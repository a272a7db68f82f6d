#include "distded/cli.hpp"

int main(int argc, char** argv) { return distded::cli::run(argc, argv); }
