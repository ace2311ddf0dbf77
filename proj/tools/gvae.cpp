#include "gvae/cli.hpp"

int main(int argc, char** argv) { return gvae::cli_main(argc, argv); }
