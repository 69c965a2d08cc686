#include "cli.hpp"

int main(int argc, char** argv) { return motionid::cli::run(argc, argv); }
