#include "grea/cli.hpp"

int main(int argc, char** argv) { return grea::cli::run(argc, argv); }
