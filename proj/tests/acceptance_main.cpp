// Release-gate runner: one pass/fail line per check, exit code = number of
// failures. `--only <id>` restricts to named checks (repeatable), `--fast`
// skips the training-based ones, `--list` prints the available ids.
#include <cstdio>
#include <cstring>
#include <iostream>
#include <string>
#include <vector>

#include "derain/verify.hpp"

int main(int argc, char** argv) {
  derain::CheckContext ctx;
  ctx.cli_path = DERAIN_CLI_PATH;
  ctx.work_dir = "acceptance_work";
  std::vector<std::string> only;
  bool fast_only = false;

  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    auto next = [&](const char* what) {
      if (i + 1 >= argc) {
        std::fprintf(stderr, "%s needs a value\n", what);
        std::exit(2);
      }
      return std::string(argv[++i]);
    };
    if (arg == "--only") {
      only.push_back(next("--only"));
    } else if (arg == "--work") {
      ctx.work_dir = next("--work");
    } else if (arg == "--cli") {
      ctx.cli_path = next("--cli");
    } else if (arg == "--fast") {
      fast_only = true;
    } else if (arg == "--list") {
      for (const auto& c : derain::acceptance_checks())
        std::printf("%-12s %s%s\n", c.id.c_str(), c.title.c_str(), c.fast ? "" : " (slow)");
      return 0;
    } else if (arg == "--help" || arg == "-h") {
      std::printf("usage: %s [--only ID]... [--fast] [--work DIR] [--cli PATH] [--list]\n",
                  argv[0]);
      return 0;
    } else {
      std::fprintf(stderr, "unknown argument '%s' (try --help)\n", arg.c_str());
      return 2;
    }
  }

  return derain::run_checks(ctx, only, fast_only, std::cout);
}
