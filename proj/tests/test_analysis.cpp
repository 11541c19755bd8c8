// Copyright (c) 2026 The canid authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "canid/analysis.hpp"
#include "canid/error.hpp"
#include "canid/io_util.hpp"
#include "canid/rng.hpp"

using namespace canid;
using namespace canid::analysis;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("canid_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

using Pairs = std::vector<std::pair<std::string, std::string>>;

}  // namespace

TEST_CASE("evaluate exact counting") {
  const LabelSet labels = LabelSet::canonical();
  Pairs refs, hyps;
  for (int i = 0; i < 9; ++i) {
    const std::string id = "u" + std::to_string(i);
    refs.emplace_back(id, labels.labels[static_cast<size_t>(i % 3)]);
    hyps.emplace_back(id, labels.labels[static_cast<size_t>(i % 3)]);
  }
  const EvalReport all = evaluate(hyps, refs, labels, "sys", "test");
  CHECK(all.accuracy == 1.0);
  for (int c = 0; c < 3; ++c) {
    CHECK(all.confusion.at(c, c) == 3);
    CHECK(all.recalls[static_cast<size_t>(c)] == 1.0);
  }

  // constant "Ul" prediction on a balanced set: accuracy 1/3, one full column
  Pairs const_hyps;
  for (const auto& [id, ref] : refs) const_hyps.emplace_back(id, "Ul");
  const EvalReport constant = evaluate(const_hyps, refs, labels, "sys", "test");
  CHECK(constant.accuracy == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  for (int r = 0; r < 3; ++r) {
    CHECK(constant.confusion.at(r, 2) == 3);
    CHECK(constant.confusion.at(r, 0) == 0);
    CHECK(constant.confusion.at(r, 1) == 0);
  }
  CHECK(constant.confusion.trace() == 3);
  CHECK(constant.confusion.total() == 9);
}

TEST_CASE("evaluate rejects misaligned ids") {
  const LabelSet labels = LabelSet::canonical();
  const Pairs refs = {{"u1", "Co"}, {"u2", "Mu"}};
  const Pairs hyps = {{"u1", "Co"}, {"u3", "Mu"}};
  CHECK_THROWS_WITH_AS(evaluate(hyps, refs, labels, "s", "t"), doctest::Contains("misaligned"),
                       DataError);
}

TEST_CASE("confusion row sums equal reference counts") {
  const LabelSet labels = LabelSet::canonical();
  Rng rng(3);
  Pairs refs, hyps;
  std::map<std::string, int> ref_counts;
  for (int i = 0; i < 120; ++i) {
    const std::string id = "u" + std::to_string(i);
    const std::string ref = labels.labels[rng.below(3)];
    const std::string hyp = labels.labels[rng.below(3)];
    refs.emplace_back(id, ref);
    hyps.emplace_back(id, hyp);
    ++ref_counts[ref];
  }
  const EvalReport rep = evaluate(hyps, refs, labels, "s", "t");
  for (int c = 0; c < 3; ++c)
    CHECK(rep.confusion.row_sum(c) == ref_counts[labels.labels[static_cast<size_t>(c)]]);
  CHECK(rep.accuracy ==
        static_cast<double>(rep.confusion.trace()) / static_cast<double>(rep.confusion.total()));
}

TEST_CASE("mean_pool_frames properties") {
  dsp::FeatureMatrix f;
  f.frames = 2;
  f.dims = 3;
  f.data = {0.0, 2.0, -4.0, 2.0, 4.0, 8.0};
  const auto pooled = mean_pool_frames(f);
  CHECK(pooled == std::vector<double>{1.0, 3.0, 2.0});

  // permutation invariance
  dsp::FeatureMatrix g = f;
  std::swap_ranges(g.row(0), g.row(0) + 3, g.row(1));
  CHECK(mean_pool_frames(g) == pooled);

  // linearity
  dsp::FeatureMatrix h = f;
  for (double& x : h.data) x *= 2.5;
  const auto scaled = mean_pool_frames(h);
  for (size_t i = 0; i < 3; ++i) CHECK(scaled[i] == doctest::Approx(2.5 * pooled[i]).epsilon(1e-12));

  dsp::FeatureMatrix constant;
  constant.frames = 5;
  constant.dims = 2;
  constant.data.assign(10, 3.25);
  CHECK(mean_pool_frames(constant) == std::vector<double>{3.25, 3.25});
}

TEST_CASE("pca on collinear data explains everything with one component") {
  const int n = 12, d = 3;
  std::vector<double> x(static_cast<size_t>(n) * d);
  Rng rng(5);
  const double dir[3] = {1.0, -2.0, 0.5};
  for (int i = 0; i < n; ++i) {
    const double s = rng.uniform(-2.0, 2.0);
    for (int j = 0; j < d; ++j) x[static_cast<size_t>(i) * d + j] = s * dir[j] + 7.0;
  }
  const PcaResult res = pca(x, n, d, 1);
  double total = 0.0;
  // total variance from the data itself
  std::vector<double> mean(3, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += x[static_cast<size_t>(i) * d + j] / n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      const double dv = x[static_cast<size_t>(i) * d + j] - mean[static_cast<size_t>(j)];
      total += dv * dv / (n - 1);
    }
  CHECK(res.explained[0] / total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("pca with k = D reconstructs full-rank data") {
  const int n = 20, d = 4;
  std::vector<double> x(static_cast<size_t>(n) * d);
  Rng rng(7);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  const PcaResult res = pca(x, n, d, d);

  // components orthonormal
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) {
      double acc = 0.0;
      for (int j = 0; j < d; ++j)
        acc += res.components[static_cast<size_t>(a) * d + j] *
               res.components[static_cast<size_t>(b) * d + j];
      CHECK(std::abs(acc - (a == b ? 1.0 : 0.0)) <= 1e-9);
    }
  // explained variance non-increasing
  for (int j = 0; j + 1 < d; ++j) CHECK(res.explained[static_cast<size_t>(j)] >=
                                        res.explained[static_cast<size_t>(j) + 1]);

  // reconstruction: centered row = sum_k proj[k] * component[k]
  std::vector<double> mean(static_cast<size_t>(d), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += x[static_cast<size_t>(i) * d + j] / n;
  double worst = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      double rec = mean[static_cast<size_t>(j)];
      for (int k = 0; k < d; ++k)
        rec += res.projected[static_cast<size_t>(i) * d + k] *
               res.components[static_cast<size_t>(k) * d + j];
      worst = std::max(worst, std::abs(rec - x[static_cast<size_t>(i) * d + j]));
    }
  CHECK(worst <= 1e-9);

  CHECK_THROWS_WITH_AS(pca(x, n, d, d + 1), doctest::Contains("out of range"), DataError);
  CHECK_THROWS_AS(pca(x, 1, d, 1), DataError);
}

TEST_CASE("pca subspace matches a power-iteration oracle on 10x5 input") {
  const int n = 10, d = 5, k = 3;
  std::vector<double> x(static_cast<size_t>(n) * d);
  Rng rng(11);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  const PcaResult res = pca(x, n, d, k);

  // оracle: covariance eigenvectors by power iteration with deflation
  std::vector<double> mean(static_cast<size_t>(d), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += x[static_cast<size_t>(i) * d + j] / n;
  std::vector<double> cov(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        cov[static_cast<size_t>(a) * d + b] +=
            (x[static_cast<size_t>(i) * d + a] - mean[static_cast<size_t>(a)]) *
            (x[static_cast<size_t>(i) * d + b] - mean[static_cast<size_t>(b)]) / (n - 1);

  std::vector<std::vector<double>> oracle;
  std::vector<double> deflated = cov;
  for (int comp = 0; comp < k; ++comp) {
    std::vector<double> v(static_cast<size_t>(d));
    Rng vr(100 + static_cast<uint64_t>(comp));
    for (double& e : v) e = vr.uniform(-1.0, 1.0);
    for (int iter = 0; iter < 4000; ++iter) {
      std::vector<double> w(static_cast<size_t>(d), 0.0);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          w[static_cast<size_t>(a)] += deflated[static_cast<size_t>(a) * d + b] * v[static_cast<size_t>(b)];
      double norm = 0.0;
      for (double e : w) norm += e * e;
      norm = std::sqrt(norm);
      for (size_t j = 0; j < w.size(); ++j) v[j] = w[j] / norm;
    }
    double lambda = 0.0;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        lambda += v[static_cast<size_t>(a)] * deflated[static_cast<size_t>(a) * d + b] *
                  v[static_cast<size_t>(b)];
    oracle.push_back(v);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        deflated[static_cast<size_t>(a) * d + b] -= lambda * v[static_cast<size_t>(a)] * v[static_cast<size_t>(b)];
  }

  // compare projectors: ||P_impl - P_oracle||_F bounds the principal angles
  std::vector<double> p1(static_cast<size_t>(d) * d, 0.0), p2 = p1;
  for (int comp = 0; comp < k; ++comp)
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) {
        p1[static_cast<size_t>(a) * d + b] += res.components[static_cast<size_t>(comp) * d + a] *
                                              res.components[static_cast<size_t>(comp) * d + b];
        p2[static_cast<size_t>(a) * d + b] +=
            oracle[static_cast<size_t>(comp)][static_cast<size_t>(a)] *
            oracle[static_cast<size_t>(comp)][static_cast<size_t>(b)];
      }
  double frob = 0.0;
  for (size_t i = 0; i < p1.size(); ++i) frob += (p1[i] - p2[i]) * (p1[i] - p2[i]);
  CHECK(std::sqrt(frob) <= 1e-8);
}

TEST_CASE("tsne bandwidth search hits the target entropy") {
  const int n = 20, d = 10;
  std::vector<double> x(static_cast<size_t>(n) * d);
  Rng rng(13);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  const double perplexity = 5.0;
  const TsneAffinities aff = gaussian_affinities(x, n, d, perplexity);

  for (int i = 0; i < n; ++i) {
    double h = 0.0, sum = 0.0;
    for (int j = 0; j < n; ++j) {
      const double p = aff.p_cond[static_cast<size_t>(i) * n + j];
      sum += p;
      if (p > 1e-300) h -= p * std::log(p);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    CHECK(std::abs(h - std::log(perplexity)) <= 1e-5);
  }

  // symmetrized matrix: symmetric, non-negative, sums to 1
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double pij = (aff.p_cond[static_cast<size_t>(i) * n + j] +
                          aff.p_cond[static_cast<size_t>(j) * n + i]) /
                         (2.0 * n);
      CHECK(pij >= 0.0);
      total += pij;
    }
  CHECK(std::abs(total - 1.0) <= 1e-9);

  CHECK_THROWS_AS(gaussian_affinities(x, 3, d, 5.0), DataError);
}

TEST_CASE("tsne separates two well-separated clusters") {
  const int n = 20, d = 5;
  std::vector<double> x(static_cast<size_t>(n) * d, 0.0);
  Rng rng(17);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      x[static_cast<size_t>(i) * d + j] = (i < 10 ? 0.0 : 25.0) + rng.gaussian();

  TsneParams params;
  params.perplexity = 5.0;
  params.iters = 600;
  params.seed = 3;
  const TsneResult res = tsne(x, n, d, params);

  // a separating direction exists with positive margin: project onto the
  // difference of cluster centroids
  double ca[2] = {0, 0}, cb[2] = {0, 0};
  for (int i = 0; i < 10; ++i) {
    ca[0] += res.y[static_cast<size_t>(i) * 2] / 10.0;
    ca[1] += res.y[static_cast<size_t>(i) * 2 + 1] / 10.0;
    cb[0] += res.y[static_cast<size_t>(i + 10) * 2] / 10.0;
    cb[1] += res.y[static_cast<size_t>(i + 10) * 2 + 1] / 10.0;
  }
  const double dir[2] = {cb[0] - ca[0], cb[1] - ca[1]};
  double max_a = -1e300, min_b = 1e300;
  for (int i = 0; i < 10; ++i) {
    max_a = std::max(max_a, res.y[static_cast<size_t>(i) * 2] * dir[0] +
                                res.y[static_cast<size_t>(i) * 2 + 1] * dir[1]);
    min_b = std::min(min_b, res.y[static_cast<size_t>(i + 10) * 2] * dir[0] +
                                res.y[static_cast<size_t>(i + 10) * 2 + 1] * dir[1]);
  }
  CHECK(min_b > max_a);

  // determinism
  const TsneResult res2 = tsne(x, n, d, params);
  CHECK(res.y == res2.y);
}

TEST_CASE("tsne KL is non-increasing over 50-iteration windows after exaggeration") {
  const int n = 30, d = 5;
  std::vector<double> x(static_cast<size_t>(n) * d);
  Rng rng(19);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  TsneParams params;
  params.perplexity = 8.0;
  params.iters = 600;
  params.seed = 1;
  const TsneResult res = tsne(x, n, d, params);
  REQUIRE(res.kl_history.size() == 600);
  for (size_t t = static_cast<size_t>(params.exaggeration_iters); t + 50 < 600; ++t)
    CHECK(res.kl_history[t + 50] <= res.kl_history[t] + 50.0 * 1e-6);
}

TEST_CASE("project_embeddings clamps pca_k and keeps rows aligned") {
  Manifest m;
  m.label_set = LabelSet::canonical();
  std::vector<std::pair<std::string, std::vector<double>>> embeddings;
  Rng rng(23);
  for (int i = 0; i < 18; ++i) {
    UtteranceRecord r;
    r.id = "p" + std::to_string(i);
    r.audio = "a";
    r.dialect = m.label_set.labels[static_cast<size_t>(i % 3)];
    r.speaker = "s";
    m.records.push_back(r);
    std::vector<double> e(6);
    for (double& v : e) v = rng.uniform(-1.0, 1.0) + (i % 3) * 10.0;
    embeddings.emplace_back(r.id, e);
  }
  TsneParams params;
  params.iters = 700;  // past exaggeration, so clusters have expanded
  // pca_k = 50 > dim 6: clamps to 6 and proceeds
  const Projection2D proj = project_embeddings(embeddings, m, 50, params);
  REQUIRE(proj.rows.size() == 18);
  for (size_t i = 0; i < proj.rows.size(); ++i) {
    CHECK(proj.rows[i].utt_id == embeddings[i].first);
    CHECK(std::isfinite(proj.rows[i].x));
    CHECK(std::isfinite(proj.rows[i].y));
  }
  CHECK(cluster_separation_ratio(proj) >= 3.0);
}

TEST_CASE("report emitters round trip and stay byte-stable") {
  const auto dir = temp_dir("emitters");
  const LabelSet labels = LabelSet::canonical();
  Pairs refs, hyps;
  Rng rng(29);
  for (int i = 0; i < 40; ++i) {
    const std::string id = "u" + std::to_string(i);
    refs.emplace_back(id, labels.labels[rng.below(3)]);
    hyps.emplace_back(id, rng.uniform() < 0.7 ? refs.back().second : labels.labels[rng.below(3)]);
  }
  const EvalReport rep = evaluate(hyps, refs, labels, "acoustic", "test");

  const std::string json_path = (dir / "rep.json").string();
  emit_report_json(rep, json_path);
  const EvalReport back = load_report_json(json_path);
  CHECK(back.system == rep.system);
  CHECK(back.accuracy == rep.accuracy);
  CHECK(back.confusion.counts == rep.confusion.counts);

  const std::string csv_path = (dir / "conf.csv").string();
  emit_confusion_csv(rep, csv_path);
  const ConfusionMatrix cm = parse_confusion_csv(csv_path);
  CHECK(cm.labels == labels);
  CHECK(cm.counts == rep.confusion.counts);

  emit_report_md(rep, (dir / "rep.md").string());
  const std::string md = read_file_text((dir / "rep.md").string());
  CHECK(md.find("| Model | Accuracy |") != std::string::npos);
  CHECK(md.find("ref\\hyp") != std::string::npos);

  // byte determinism
  emit_report_json(rep, (dir / "rep2.json").string());
  CHECK(read_file_text(json_path) == read_file_text((dir / "rep2.json").string()));
}

TEST_CASE("table-2 fixture evaluates to 0.73 with the published recall shape") {
  const std::string dir = CANID_FIXTURE_DIR;
  const fusion::ScoreTable table = fusion::load_score_table(dir + "/pretrained_ecapa_test.csv");
  const EvalReport rep = evaluate_table(table, "Pretrained ECAPA-TDNN", "test");
  CHECK(rep.accuracy == doctest::Approx(0.73).epsilon(1e-12));
  CHECK(rep.confusion.total() == 100);
  CHECK(rep.recalls[2] >= 0.93);  // Ulster well above the southern dialects
  CHECK(rep.recalls[0] < 0.70);
  CHECK(rep.recalls[1] < 0.70);

  const auto out = temp_dir("fixture_md");
  emit_report_md(rep, (out / "t2.md").string());
  const std::string md = read_file_text((out / "t2.md").string());
  CHECK(md.find("| Pretrained ECAPA-TDNN | 0.73 |") != std::string::npos);
}

TEST_CASE("delta report shows per-class recall movements") {
  const LabelSet labels = LabelSet::canonical();
  // 50 per class; fused gains 6 points on Co and Mu, loses 2 on Ul
  auto build = [&](int co, int mu, int ul) {
    Pairs refs, hyps;
    int idx = 0;
    auto add = [&](const std::string& ref, int correct, int total) {
      for (int i = 0; i < total; ++i) {
        const std::string id = "d" + std::to_string(idx++);
        refs.emplace_back(id, ref);
        hyps.emplace_back(id, i < correct ? ref : (ref == "Co" ? "Mu" : "Co"));
      }
    };
    add("Co", co, 50);
    add("Mu", mu, 50);
    add("Ul", ul, 50);
    return evaluate(hyps, refs, labels, "sys", "test");
  };
  const EvalReport baseline = build(32, 32, 48);
  const EvalReport fused = build(35, 35, 47);

  const auto dir = temp_dir("delta");
  emit_delta_md(baseline, fused, (dir / "delta.md").string());
  const std::string md = read_file_text((dir / "delta.md").string());
  CHECK(md.find("| Co | 0.64 | 0.7 | +6.0 |") != std::string::npos);
  CHECK(md.find("| Mu | 0.64 | 0.7 | +6.0 |") != std::string::npos);
  CHECK(md.find("| Ul | 0.96 | 0.94 | -2.0 |") != std::string::npos);
}

TEST_CASE("projection and curve SVG structure") {
  const auto dir = temp_dir("svg");
  Projection2D proj;
  const LabelSet labels = LabelSet::canonical();
  Rng rng(31);
  for (int i = 0; i < 15; ++i)
    proj.rows.push_back({"s" + std::to_string(i), labels.labels[static_cast<size_t>(i % 3)],
                         rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)});
  const std::string proj_svg = (dir / "proj.svg").string();
  emit_projection_svg(proj, labels, proj_svg);
  const std::string svg = read_file_text(proj_svg);
  size_t circles = 0;
  for (size_t pos = svg.find("<circle"); pos != std::string::npos;
       pos = svg.find("<circle", pos + 1))
    ++circles;
  CHECK(circles == 15);
  CHECK(svg.find("<svg") != std::string::npos);

  std::vector<fusion::LambdaCurvePoint> curve;
  for (double l : fusion::lambda_grid()) curve.push_back({l, 0.6 + l / 5.0});
  const std::string curve_svg = (dir / "curve.svg").string();
  emit_curve_svg(curve, curve_svg);
  const std::string csvg = read_file_text(curve_svg);
  const size_t poly = csvg.find("<polyline");
  REQUIRE(poly != std::string::npos);
  const size_t points_start = csvg.find("points=\"", poly) + 8;
  const size_t points_end = csvg.find('"', points_start);
  const std::string pts = csvg.substr(points_start, points_end - points_start);
  size_t vertices = 1;
  for (char c : pts)
    if (c == ' ') ++vertices;
  CHECK(vertices == 11);

  // projection csv round trip
  const std::string proj_csv = (dir / "proj.csv").string();
  emit_projection_csv(proj, proj_csv);
  const Projection2D back = load_projection_csv(proj_csv);
  REQUIRE(back.rows.size() == proj.rows.size());
  for (size_t i = 0; i < back.rows.size(); ++i) {
    CHECK(back.rows[i].utt_id == proj.rows[i].utt_id);
    CHECK(std::abs(back.rows[i].x - proj.rows[i].x) <= 1e-9);
  }
}
