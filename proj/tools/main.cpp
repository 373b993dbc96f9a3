#include "cli.hpp"

int main(int argc, char** argv) { return ovit::cli::run(argc, argv, std::cout, std::cerr); }
