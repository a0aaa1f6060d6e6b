// Acceptance suite: one pass/fail line per criterion, grouped so ctest can
// run the cheap analytic checks separately from the slow training runs.
// Usage: acceptance [--group formulas|oracle|statistical|determinism|qualitative|all]

#include <cstring>
#include <iostream>

int run_formulas(int& passed, int& failed);
int run_oracle(int& passed, int& failed);
int run_statistical(int& passed, int& failed);
int run_determinism(int& passed, int& failed);
int run_qualitative(int& passed, int& failed);

int main(int argc, char** argv) {
    std::string group = "all";
    for (int i = 1; i < argc - 1; ++i)
        if (std::strcmp(argv[i], "--group") == 0) group = argv[i + 1];

    int passed = 0, failed = 0;
    if (group == "all" || group == "formulas") run_formulas(passed, failed);
    if (group == "all" || group == "oracle") run_oracle(passed, failed);
    if (group == "all" || group == "statistical") run_statistical(passed, failed);
    if (group == "all" || group == "determinism") run_determinism(passed, failed);
    if (group == "all" || group == "qualitative") run_qualitative(passed, failed);

    std::cout << "\n" << passed << " passed, " << failed << " failed\n";
    return failed == 0 ? 0 : 1;
}
