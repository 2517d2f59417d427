#include "coregauge/cli.hpp"

int main(int argc, char** argv) { return coregauge::cli::run_cli(argc, argv); }
