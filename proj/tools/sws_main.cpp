#include "sws/cli.hpp"

int main(int argc, char** argv) { return sws::cli::run(argc, argv); }
