#include "tlvc/cli.hpp"

int main(int argc, char** argv) { return tlvc::cli::run_cli(argc, argv); }
