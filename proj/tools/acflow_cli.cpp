#include "acflow/cli.hpp"

int main(int argc, char** argv) { return acflow::cli_dispatch(argc, argv); }
