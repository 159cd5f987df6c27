#include "embc_cli.hpp"

int main(int argc, char** argv) { return embc::cli::run(argc, argv); }
