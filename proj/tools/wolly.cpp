#include <csignal>
#include <iostream>
#include <thread>

#include "wolly/cli.hpp"

// SIGINT/SIGTERM are blocked in every thread and collected by one sigwait
// thread, which turns them into a stop request for serve and robot.
int main(int argc, char** argv) {
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    std::stop_source stop;
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        stop.request_stop();
    });
    waiter.detach();

    wolly::cli::Hooks hooks;
    hooks.stop = stop.get_token();
    std::vector<std::string> args(argv + 1, argv + argc);
    return wolly::cli::run(args, std::cout, std::cerr, hooks);
}
