#include "mddnet/cli.hpp"

int main(int argc, char** argv) { return mddnet::cli::dispatch(argc, argv); }
