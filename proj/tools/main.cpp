#include "cli.hpp"

int main(int argc, char** argv) { return ttt::cli::run(argc, argv); }
