#include "cli.hpp"

int main(int argc, char** argv) { return dcqa::cli::run_cli(argc, argv); }
