#include "canlab/service/cli.hpp"

#include <csignal>
#include <iostream>

int main(int argc, char** argv)
{
    std::signal(SIGINT, [](int) { canlab::service::request_shutdown(); });
    std::signal(SIGTERM, [](int) { canlab::service::request_shutdown(); });
    return canlab::service::cli_main(argc, argv, std::cout, std::cerr);
}
