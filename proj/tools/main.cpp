#include "evortex/cli.hpp"

int main(int argc, char** argv) { return evortex::cli::run(argc, argv); }
