#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "gvae/metrics.hpp"

using namespace gvae;
using Catch::Approx;

namespace {

const factor_dataset& shared_data() {
  static factor_dataset data{factor_spec::defaults()};
  return data;
}

// Codes synthesized from grid labels; column builder gets (labels, dim).
tensor<float> label_codes(const factor_dataset& data, int d,
                          const std::function<float(const std::vector<int>&, int)>& f) {
  tensor<float> codes({int(data.count()), d});
  for (long i = 0; i < data.count(); ++i) {
    std::vector<int> lab(std::size_t(data.spec().count_factors()), 0);
    for (int k = 0; k < data.spec().count_factors(); ++k) lab[std::size_t(k)] = data.label(i, k);
    for (int j = 0; j < d; ++j) codes.at(int(i), j) = f(lab, j);
  }
  return codes;
}

tensor<float> noise_codes(const factor_dataset& data, int d, std::uint64_t seed) {
  rng r(seed);
  tensor<float> codes({int(data.count()), d});
  for (float& v : codes.data) v = float(r.normal());
  return codes;
}

}  // namespace

TEST_CASE("axis-aligned codes max out every score") {
  const auto& data = shared_data();
  const int m = data.spec().count_factors();
  // one dim per factor plus two dead dims
  const auto codes = label_codes(data, m + 2, [&](const std::vector<int>& lab, int j) {
    return j < m ? float(lab[std::size_t(j)]) : 0.25f;
  });

  metric_options opts;
  rng bv(derive_seed(7, "metrics.betavae"));
  bool degenerate = true;
  const double b = betavae_score_codes(codes, data, bv, opts, &degenerate);
  CHECK_FALSE(degenerate);
  CHECK(b >= 0.98);

  rng fv(derive_seed(7, "metrics.factorvae"));
  std::vector<std::vector<long>> votes;
  const double f = factorvae_score_codes(codes, data, fv, opts, &votes);
  CHECK(f >= 0.98);
  REQUIRE(votes.size() == std::size_t(m + 2));
  for (int j = m; j < m + 2; ++j)  // constant dims cast no votes
    for (long c : votes[std::size_t(j)]) CHECK(c == 0);
  for (int j = 0; j < m; ++j) {  // dim j votes only for factor j
    long own = votes[std::size_t(j)][std::size_t(j)], other = 0;
    for (int k = 0; k < m; ++k)
      if (k != j) other += votes[std::size_t(j)][std::size_t(k)];
    CHECK(own > 0);
    CHECK(other == 0);
  }

  const auto labels = grid_labels(data);
  std::vector<std::vector<double>> mi_mat;
  const double g = mig(codes, labels, 20, &mi_mat);
  CHECK(g == Approx(1.0).margin(1e-9));
  for (int j = m; j < m + 2; ++j)
    for (double v : mi_mat[std::size_t(j)]) CHECK(v == 0.0);

  const auto dci = dci_disentanglement(codes, labels);
  CHECK(dci.disentanglement >= 0.98);
  for (int j = m; j < m + 2; ++j)
    for (double v : dci.importance[std::size_t(j)]) CHECK(v == 0.0);
}

TEST_CASE("mutual information matches entropy when a dim copies a factor") {
  const auto& data = shared_data();
  const auto labels = grid_labels(data);
  const auto codes = label_codes(data, 1, [](const std::vector<int>& lab, int) {
    return float(lab[2]);
  });
  const auto mi = discrete_mutual_information(codes, labels, 20);
  // factor 2 is uniform over 8 values on the full grid
  CHECK(mi[0][2] == Approx(std::log(8.0)).margin(1e-9));
  // the other factors vary independently of it across the grid
  CHECK(mi[0][0] == Approx(0.0).margin(1e-12));
  CHECK(mi[0][1] == Approx(0.0).margin(1e-12));
  CHECK(mi[0][3] == Approx(0.0).margin(1e-12));
}

TEST_CASE("duplicated dims cancel the gap for their factor") {
  const auto& data = shared_data();
  const auto labels = grid_labels(data);
  const auto codes = label_codes(data, 3, [](const std::vector<int>& lab, int j) {
    return float(lab[j < 2 ? 2 : 3]);
  });
  // factor 2: two tied top dims, gap 0; factor 3: clean gap 1; factors 0,1: no MI
  CHECK(mig(codes, labels) == Approx(0.25).margin(1e-9));
}

TEST_CASE("single-dim codes use a zero runner-up") {
  const auto& data = shared_data();
  const auto labels = grid_labels(data);
  const auto codes = label_codes(data, 1, [](const std::vector<int>& lab, int) {
    return float(lab[0]);
  });
  CHECK(mig(codes, labels) == Approx(0.25).margin(1e-9));
}

TEST_CASE("label-independent noise scores at chance") {
  const auto& data = shared_data();
  const int m = data.spec().count_factors();
  const auto codes = noise_codes(data, 6, 11);
  const double chance = 1.0 / m;

  metric_options opts;
  rng bv(derive_seed(11, "metrics.betavae"));
  const double b = betavae_score_codes(codes, data, bv, opts);
  const double b_sigma = std::sqrt(chance * (1 - chance) / opts.betavae_test);
  CHECK(std::abs(b - chance) <= 3 * b_sigma);

  rng fv(derive_seed(11, "metrics.factorvae"));
  const double f = factorvae_score_codes(codes, data, fv, opts);
  const double f_sigma = std::sqrt(chance * (1 - chance) / opts.factorvae_test);
  CHECK(std::abs(f - chance) <= 3 * f_sigma);

  const auto labels = grid_labels(data);
  CHECK(mig(codes, labels) <= 0.05);
  // importance rows are normalized per dim, so noise lands in a scale-free
  // null band (empirically 0.24 +/- 0.06 over seeds) rather than at zero
  const double dci = dci_disentanglement(codes, labels).disentanglement;
  CHECK(dci >= 0.05);
  CHECK(dci <= 0.45);
}

TEST_CASE("fully entangled codes score low on dci") {
  const auto& data = shared_data();
  const auto labels = grid_labels(data);
  const auto codes = label_codes(data, 4, [](const std::vector<int>& lab, int) {
    float s = 0.0f;
    for (int v : lab) s += float(v);
    return s;
  });
  CHECK(dci_disentanglement(codes, labels).disentanglement <= 0.2);
}

TEST_CASE("scores ignore latent dim order") {
  const auto& data = shared_data();
  const int m = data.spec().count_factors();
  const auto codes = label_codes(data, m + 2, [&](const std::vector<int>& lab, int j) {
    return j < m ? float(lab[std::size_t(j)]) : 0.25f;
  });
  const int d = codes.shape[1];
  tensor<float> rev({codes.shape[0], d});
  for (int i = 0; i < codes.shape[0]; ++i)
    for (int j = 0; j < d; ++j) rev.at(i, j) = codes.at(i, d - 1 - j);

  metric_options opts;
  {
    rng a(1), b(1);
    CHECK(betavae_score_codes(codes, data, a, opts) ==
          Approx(betavae_score_codes(rev, data, b, opts)).margin(1e-9));
  }
  {
    rng a(1), b(1);
    CHECK(factorvae_score_codes(codes, data, a, opts) ==
          Approx(factorvae_score_codes(rev, data, b, opts)).margin(1e-9));
  }
  const auto labels = grid_labels(data);
  CHECK(mig(codes, labels) == Approx(mig(rev, labels)).margin(1e-12));
  CHECK(dci_disentanglement(codes, labels).disentanglement ==
        Approx(dci_disentanglement(rev, labels).disentanglement).margin(1e-9));

  // permutation invariance also holds away from the perfect-codes corner
  const auto noisy = noise_codes(data, 4, 3);
  tensor<float> noisy_rev({noisy.shape[0], 4});
  for (int i = 0; i < noisy.shape[0]; ++i)
    for (int j = 0; j < 4; ++j) noisy_rev.at(i, j) = noisy.at(i, 3 - j);
  CHECK(mig(noisy, labels) == Approx(mig(noisy_rev, labels)).margin(1e-12));
  CHECK(dci_disentanglement(noisy, labels).disentanglement ==
        Approx(dci_disentanglement(noisy_rev, labels).disentanglement).margin(1e-9));
}

TEST_CASE("per-dim affine rescaling leaves factorvae, mig and dci unchanged") {
  const auto& data = shared_data();
  const auto labels = grid_labels(data);
  const auto codes = noise_codes(data, 6, 5);
  // power-of-two scales keep float comparisons order-exact
  const float scale[6] = {0.5f, 2.0f, 4.0f, 8.0f, 0.25f, 1.0f};
  const float shift[6] = {1.0f, -2.0f, 3.0f, 0.0f, 5.0f, -7.0f};
  tensor<float> moved({codes.shape[0], 6});
  for (int i = 0; i < codes.shape[0]; ++i)
    for (int j = 0; j < 6; ++j) moved.at(i, j) = codes.at(i, j) * scale[j] + shift[j];

  metric_options opts;
  rng a(9), b(9);
  CHECK(factorvae_score_codes(codes, data, a, opts) ==
        Approx(factorvae_score_codes(moved, data, b, opts)).margin(1e-12));
  CHECK(mig(codes, labels) == Approx(mig(moved, labels)).margin(1e-9));
  CHECK(dci_disentanglement(codes, labels).disentanglement ==
        Approx(dci_disentanglement(moved, labels).disentanglement).margin(1e-9));
}

TEST_CASE("constant codes degrade gracefully or loudly") {
  const auto& data = shared_data();
  const int m = data.spec().count_factors();
  const auto codes = label_codes(data, 3, [](const std::vector<int>&, int) {
    return 0.5f;
  });

  metric_options opts;
  rng bv(1);
  bool degenerate = false;
  CHECK(betavae_score_codes(codes, data, bv, opts, &degenerate) == Approx(1.0 / m));
  CHECK(degenerate);

  rng fv(1);
  CHECK_THROWS_AS(factorvae_score_codes(codes, data, fv, opts), contract_error);

  const auto labels = grid_labels(data);
  CHECK(mig(codes, labels) == 0.0);  // constant dims carry zero MI
  CHECK(dci_disentanglement(codes, labels).disentanglement == 0.0);
}

TEST_CASE("collapsed dims are excluded but live dims still vote") {
  const auto& data = shared_data();
  // dim 0 copies a factor, dims 1..2 are flat
  const auto codes = label_codes(data, 3, [](const std::vector<int>& lab, int j) {
    return j == 0 ? float(lab[3]) : 0.0f;
  });
  metric_options opts;
  rng fv(2);
  std::vector<std::vector<long>> votes;
  const double f = factorvae_score_codes(codes, data, fv, opts, &votes);
  long live = 0, dead = 0;
  for (long c : votes[0]) live += c;
  for (long c : votes[1]) dead += c;
  for (long c : votes[2]) dead += c;
  CHECK(live == opts.factorvae_train);
  CHECK(dead == 0);
  // every vote lands on dim 0 so only factor-3 probes can be right
  CHECK(f == Approx(0.25).margin(0.075));
}

TEST_CASE("input validation rejects malformed requests") {
  const auto& data = shared_data();
  const auto labels = grid_labels(data);
  const auto codes = label_codes(data, 2, [](const std::vector<int>& lab, int j) {
    return float(lab[std::size_t(j)]);
  });

  CHECK_THROWS_AS(discrete_mutual_information(codes, labels, 1), contract_error);
  auto short_labels = labels;
  short_labels.pop_back();
  CHECK_THROWS_AS(discrete_mutual_information(codes, short_labels, 20), dimension_error);
  CHECK_THROWS_AS(dci_disentanglement(codes, short_labels), dimension_error);

  auto flat = labels;
  for (auto& row : flat) row[1] = 0;  // zero-entropy factor
  CHECK_THROWS_AS(mig(codes, flat), contract_error);

  metric_options bad;
  bad.mig_bins = 1;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = metric_options{};
  bad.factorvae_batch = 1;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = metric_options{};
  bad.dci_lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), config_error);
}

TEST_CASE("report evaluation is reproducible and bounded") {
  const auto& data = shared_data();
  const int m = data.spec().count_factors();
  const auto codes = label_codes(data, m, [](const std::vector<int>& lab, int j) {
    return float(lab[std::size_t(j)]) * 0.35f;
  });

  const auto r1 = evaluate_metric_codes(codes, data, 21);
  const auto r2 = evaluate_metric_codes(codes, data, 21);
  CHECK(r1.betavae == r2.betavae);
  CHECK(r1.factorvae == r2.factorvae);
  CHECK(r1.mig == r2.mig);
  CHECK(r1.dci == r2.dci);
  CHECK(r1.factorvae_votes == r2.factorvae_votes);

  for (double s : {r1.betavae, r1.factorvae, r1.mig, r1.dci}) {
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
  REQUIRE(r1.mi_matrix.size() == std::size_t(m));
  REQUIRE(r1.importance.size() == std::size_t(m));
  CHECK_FALSE(r1.betavae_degenerate);
  CHECK(r1.betavae >= 0.98);
  CHECK(r1.dci >= 0.98);
}
