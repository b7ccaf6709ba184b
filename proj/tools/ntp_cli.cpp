#include "ntp/cli.hpp"

int main(int argc, char** argv) { return ntp::cli::run(argc, argv); }
