#include "mogrpo/cli.hpp"

int main(int argc, char** argv) { return mogrpo::cli::run(argc, argv); }
