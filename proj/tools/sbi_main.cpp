#include "sbi/cli.hpp"

int main(int argc, char** argv) { return sbi::cli::run_main(argc, argv); }
