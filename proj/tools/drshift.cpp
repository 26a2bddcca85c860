#include <iostream>

#include "drshift/cli.hpp"

int main(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    const int code = drshift::dispatch(args, std::cout, std::cerr);
    std::cout.flush();
    return code;
}
