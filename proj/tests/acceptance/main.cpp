// Runs the acceptance criteria and prints one line per criterion. With arguments, only the listed
// criterion numbers run. Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <vector>

#include "acceptance.hpp"

namespace {

struct Criterion {
  int id;
  const char* name;
  acceptance::Outcome (*run)();
};

const std::vector<Criterion> kCriteria = {
    {1, "crf oracle equivalence", acceptance::crf_oracle},
    {2, "gradient suite", acceptance::gradient_suite},
    {3, "chunker round trip", acceptance::chunker_round_trip},
    {4, "context propagation invariants", acceptance::context_propagation},
    {5, "directional synthetic experiment", acceptance::directional_isbert},
    {6, "adaptive robustness", acceptance::adaptive_robustness},
    {7, "cognn coupling", acceptance::cognn_coupling},
    {8, "metrics exactness", acceptance::metrics_exactness},
    {9, "label algebra", acceptance::label_algebra},
    {10, "annotation ops", acceptance::annotation_ops},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  bool all_pass = true;
  for (const auto& c : kCriteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    auto t0 = std::chrono::steady_clock::now();
    acceptance::Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %-34s %s  [%.1fs] %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
    std::fflush(stdout);
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
