#include "dbart/cli.hpp"

int main(int argc, char** argv) { return dbart::cli::run(argc, argv); }
