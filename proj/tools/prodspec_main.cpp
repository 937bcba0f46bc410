#include "prodspec/cli.hpp"

int main(int argc, char** argv) { return prodspec::cli_main(argc, argv); }
