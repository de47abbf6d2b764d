#include <cstdio>

int main() {
  std::puts("conrad: experiment CLI (subcommands pending)");
  return 0;
}
