#include "pmme/cli.hpp"

int main(int argc, char** argv) { return pmme::cli::run(argc, argv); }
