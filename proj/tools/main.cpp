#include <cstdio>

int main() {
    std::printf("invrend: subcommands arrive with the CLI module\n");
    return 0;
}
