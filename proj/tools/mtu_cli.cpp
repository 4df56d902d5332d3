#include "mtu/cli.hpp"

int main(int argc, char** argv) { return mtu::cli::run(argc, argv); }
