#include "mtgp/cli.hpp"

int main(int argc, char** argv) { return mtgp::cli::run(argc, argv); }
