// Serial reference vs OpenMP kernels: wall time and bit-equality.
//   spa_bench [repeats]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "spa/kernels.hpp"
#include "spa/rng.hpp"
#include "spa/simulator.hpp"
#include "spa/syntax.hpp"

namespace {

using Clock = std::chrono::steady_clock;

template <class F>
double best_of(int repeats, F&& f) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t = Clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(Clock::now() - t).count());
  }
  return best;
}

template <class T>
bool same_bits(const std::vector<T>& a, const std::vector<T>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

int failures = 0;

void report(const char* name, double serial, double parallel, bool equal) {
  std::printf("%-18s serial %9.4f s   omp %9.4f s   speedup %6.2fx   %s\n", name, serial, parallel,
              parallel > 0 ? serial / parallel : 0.0, equal ? "identical" : "MISMATCH");
  if (!equal) ++failures;
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 3;
  std::printf("threads: %d\n", spa::kernels::thread_count());

  spa::SaeParameters sae;
  sae.d_model = 256;
  sae.d_sae = 4096;
  sae.activation_fn = spa::ActivationFn::jumprelu;
  spa::Rng rng(7);
  sae.w_enc.resize(sae.d_model * sae.d_sae);
  for (auto& w : sae.w_enc) w = static_cast<float>(rng.normal() / 16.0);
  sae.b_enc.assign(sae.d_sae, 0.0f);
  sae.threshold = std::vector<float>(sae.d_sae, 0.25f);
  sae.w_dec = sae.w_enc;
  sae.b_dec = std::vector<float>(sae.d_model, 0.0f);

  const std::size_t n_tokens = 512;
  std::vector<float> residuals(n_tokens * sae.d_model);
  for (auto& x : residuals) x = static_cast<float>(rng.normal());

  std::vector<float> enc_s(n_tokens * sae.d_sae), enc_p(n_tokens * sae.d_sae);
  const double t_s = best_of(repeats, [&] { spa::kernels::serial::encode_rows(residuals, n_tokens, sae, enc_s); });
  const double t_p = best_of(repeats, [&] { spa::kernels::omp::encode_rows(residuals, n_tokens, sae, enc_p); });
  report("encode_rows", t_s, t_p, same_bits(enc_s, enc_p));

  std::vector<std::uint32_t> subset;
  for (std::uint32_t f = 0; f < sae.d_sae; f += 97) subset.push_back(f);
  std::vector<float> sub_s(enc_s.size()), sub_p(enc_s.size());
  const double u_s =
      best_of(repeats, [&] { spa::kernels::serial::encode_rows_subset(residuals, n_tokens, sae, subset, sub_s); });
  const double u_p =
      best_of(repeats, [&] { spa::kernels::omp::encode_rows_subset(residuals, n_tokens, sae, subset, sub_p); });
  report("encode_rows_subset", u_s, u_p, same_bits(sub_s, sub_p));

  const auto acts = spa::FeatureActivationMatrix::from_dense(enc_s, n_tokens, sae.d_sae);
  std::vector<double> sums_s(sae.d_sae), sums_p(sae.d_sae);
  const spa::TokenRange all{0, n_tokens};
  const double s_s = best_of(repeats * 10, [&] { spa::kernels::serial::span_feature_sums(acts, all, sums_s); });
  const double s_p = best_of(repeats * 10, [&] { spa::kernels::omp::span_feature_sums(acts, all, sums_p); });
  report("span_feature_sums", s_s, s_p, same_bits(sums_s, sums_p));

  std::vector<spa::FeatureActivationMatrix> prompts(64, acts);
  std::vector<std::uint32_t> features(64);
  for (std::size_t i = 0; i < features.size(); ++i) features[i] = static_cast<std::uint32_t>(i * 61 % sae.d_sae);
  std::vector<double> grid_s(features.size() * prompts.size()), grid_p(grid_s.size());
  const double g_s = best_of(repeats, [&] { spa::kernels::serial::frequency_grid(prompts, features, grid_s); });
  const double g_p = best_of(repeats, [&] { spa::kernels::omp::frequency_grid(prompts, features, grid_p); });
  report("frequency_grid", g_s, g_p, same_bits(grid_s, grid_p));

  spa::WorldConfig config;
  config.seed = 3;
  config.objectives = {{"exception", "a try-except clause", spa::StructureKind::try_except, 5, {}}};
  config.instruction_strengths = {0.5};
  const auto world = spa::build_world(config);
  std::vector<std::string> outputs;
  for (std::uint64_t r = 0; r < 4000; ++r) {
    outputs.push_back(spa::synth_generation(world, "Write a function.", 0, spa::StructureKind::try_except, r).text);
  }
  std::vector<std::size_t> c_s, c_p;
  const double k_s = best_of(repeats, [&] { c_s = spa::kernels::serial::count_outputs(outputs, spa::StructureKind::try_except); });
  const double k_p = best_of(repeats, [&] { c_p = spa::kernels::omp::count_outputs(outputs, spa::StructureKind::try_except); });
  report("count_outputs", k_s, k_p, c_s == c_p);

  return failures == 0 ? 0 : 1;
}
