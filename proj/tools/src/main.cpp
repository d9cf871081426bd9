#include "vidpriv/cli.hpp"

int main(int argc, char** argv) { return vidpriv::cli::run(argc, argv); }
