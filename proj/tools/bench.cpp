// Benchmark of the evaluation scoring kernels: serial reference vs the
// OpenMP grid, on generated descriptor sets of increasing size.
//
//   setpool_bench [--probes N] [--gallery N] [--dim D] [--repeat R]

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>

#include "setpool/eval.hpp"
#include "setpool/parallel.hpp"
#include "setpool/pgr.hpp"
#include "setpool/rng.hpp"

using namespace setpool;

namespace {

std::vector<SetDescriptor> make_descriptors(std::size_t count, std::size_t dim, Rng& rng) {
  std::vector<SetDescriptor> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i].identity = static_cast<std::uint32_t>(i % 50);
    out[i].aggregate.resize(dim);
    for (double& x : out[i].aggregate) x = rng.normal();
    PoseRepresentation pose;
    pose.general = out[i].aggregate;
    pose.frontal.resize(dim);
    pose.profile.resize(dim);
    for (double& x : pose.frontal) x = rng.normal();
    for (double& x : pose.profile) x = rng.normal();
    pose.p_frontal = rng.uniform(0.0, 4.0);
    pose.p_profile = rng.uniform(0.0, 4.0);
    out[i].pose = std::move(pose);
  }
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

int main(int argc, char** argv) {
  std::size_t n_probes = 400;
  std::size_t n_gallery = 400;
  std::size_t dim = 128;
  int repeat = 3;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--probes") == 0 && i + 1 < argc) {
      n_probes = std::strtoull(argv[++i], nullptr, 10);
    } else if (std::strcmp(argv[i], "--gallery") == 0 && i + 1 < argc) {
      n_gallery = std::strtoull(argv[++i], nullptr, 10);
    } else if (std::strcmp(argv[i], "--dim") == 0 && i + 1 < argc) {
      dim = std::strtoull(argv[++i], nullptr, 10);
    } else if (std::strcmp(argv[i], "--repeat") == 0 && i + 1 < argc) {
      repeat = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "unknown argument: %s\n", argv[i]);
      return 1;
    }
  }

  Rng rng(12345);
  const auto probes = make_descriptors(n_probes, dim, rng);
  const auto gallery = make_descriptors(n_gallery, dim, rng);

  std::printf("scoring %zu x %zu pairs, dim %zu, %d threads\n", n_probes, n_gallery, dim,
              eval_threads());
  std::printf("%-10s %12s %12s %9s\n", "kernel", "serial s", "parallel s", "speedup");

  struct Case {
    const char* name;
    SetScorer scorer;
  };
  const Case cases[] = {
      {"l2", l2_similarity},
      {"pf-pgr", pf_pgr_similarity_score},
  };

  for (const Case& c : cases) {
    double serial_best = 1e300;
    double parallel_best = 1e300;
    std::vector<double> serial_scores, parallel_scores;
    for (int r = 0; r < repeat; ++r) {
      auto t0 = std::chrono::steady_clock::now();
      serial_scores = score_matrix_serial(probes, gallery, c.scorer);
      serial_best = std::min(serial_best, seconds_since(t0));

      t0 = std::chrono::steady_clock::now();
      parallel_scores = score_matrix(probes, gallery, c.scorer);
      parallel_best = std::min(parallel_best, seconds_since(t0));
    }
    if (serial_scores != parallel_scores) {
      std::fprintf(stderr, "MISMATCH: %s parallel kernel disagrees with serial\n", c.name);
      return 1;
    }
    std::printf("%-10s %12.4f %12.4f %8.2fx\n", c.name, serial_best, parallel_best,
                serial_best / parallel_best);
  }
  return 0;
}
