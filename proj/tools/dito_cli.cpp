#include "dito/cli.hpp"

int main(int argc, char** argv) { return dito::cli::main(argc, argv); }
