#include "gda/cli.hpp"

int main(int argc, char** argv) { return gda::cli::run(argc, argv); }
