#include "hdmnet/cli.hpp"

int main(int argc, char** argv) { return hdmnet::run_cli(argc, argv); }
