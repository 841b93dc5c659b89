#include "mhx/cli.hpp"

int main(int argc, char** argv) { return mhx::cli::run(argc, argv); }
