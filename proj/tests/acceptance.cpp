// SPDX-License-Identifier: Apache-2.0
//
// Acceptance runner. Each criterion prints one PASS or FAIL line with a short
// measurement; the exit code is the number of failed criteria.
#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <pausebench/pausebench.hpp>

using namespace pausebench;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  std::vector<std::string> failures;

  void require(bool ok, const std::string &what) {
    if (!ok) {
      failures.push_back(what);
      pass = false;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64 &rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m(i) = n(rng);
  return m;
}

// Worst relative error of an analytic gradient against central differences.
// Differencing a mean over many entries leaves about 1e-10 of rounding noise,
// so entries with smaller derivatives are compared against the floor instead.
template <class F>
double worst_relative_error(const Matrix &x, const Matrix &analytic, F &&value, double h = 1e-5,
                            double floor = 1e-5) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Matrix up = x, down = x;
    up(i) += h;
    down(i) -= h;
    const double numeric = (value(up) - value(down)) / (2 * h);
    const double scale = std::max({std::abs(numeric), std::abs(analytic(i)), floor});
    worst = std::max(worst, std::abs(numeric - analytic(i)) / scale);
  }
  return worst;
}

bool away_from_kinks(const Matrix &pred, const Matrix &target, double delta) {
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double e = std::abs(pred(i) - target(i));
    if (e < 1e-3 || std::abs(e - delta) < 1e-3)
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

void loss_gradients(Outcome &out) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::normal_distribution<double> n(0.0, 2.0);
  std::uniform_int_distribution<int> cls(0, 3), rank(1, 4);
  std::uniform_real_distribution<double> prob(0.02, 0.98);
  std::array<double, 5> worst{};
  constexpr int draws = 100;

  for (int d = 0; d < draws; ++d) {
    Matrix pred(3, 6), target(3, 6);
    IntMatrix classes(3, 6);
    do {
      for (Eigen::Index i = 0; i < pred.size(); ++i) {
        pred(i) = n(rng);
        target(i) = cls(rng);
        classes(i) = cls(rng);
      }
    } while (!away_from_kinks(pred, target, 1.0));
    worst[0] = std::max(worst[0],
                        worst_relative_error(pred, huber_loss(pred, target).grad, [&](const Matrix &p) {
                          return huber_loss(p, target).value;
                        }));

    DafParams dp;
    dp.alpha = 1.0 + 0.5 * prob(rng);
    dp.gamma = 2.0 * prob(rng);
    dp.class_weights = {{0, 0.5 + prob(rng)}, {1, 0.5 + prob(rng)}, {2, 0.5 + prob(rng)},
                        {3, 0.5 + prob(rng)}};
    worst[1] = std::max(worst[1], worst_relative_error(
                                      pred, daf_loss(pred, target, dp, classes).grad,
                                      [&](const Matrix &p) { return daf_loss(p, target, dp, classes).value; }));

    const Matrix logits = random_matrix(8, 4, rng, 2.0);
    std::vector<int> labels(8);
    for (auto &l : labels)
      l = cls(rng);
    worst[2] = std::max(worst[2], worst_relative_error(logits, ce_loss(logits, labels).grad,
                                                       [&](const Matrix &l) {
                                                         return ce_loss(l, labels).value;
                                                       }));

    Matrix p(4, 3), t(4, 3);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      p(i) = prob(rng);
      t(i) = cls(rng) % 2;
    }
    worst[3] = std::max(worst[3], worst_relative_error(p, bce_loss(p, t).grad, [&](const Matrix &q) {
                          return bce_loss(q, t).value;
                        }));

    CoralHead head(4, 5, static_cast<std::uint64_t>(d));
    head.parameters() = random_matrix(head.parameters().size(), 1, rng, 1.0);
    const Matrix x = random_matrix(6, 4, rng);
    std::vector<int> y(6);
    for (auto &v : y)
      v = rank(rng);
    const Vector base = head.parameters();
    const Vector grad = head.loss_and_gradient(x, y).second;
    worst[4] = std::max(worst[4], worst_relative_error(base, grad, [&](const Matrix &w) {
                          head.parameters() = w;
                          return head.loss_and_gradient(x, y).first;
                        }));
    head.parameters() = base;
  }
  const double secs = seconds_since(t0);
  const char *names[] = {"huber", "daf", "ce", "bce", "coral"};
  for (std::size_t i = 0; i < worst.size(); ++i) {
    out.detail << names[i] << " " << worst[i] << " ";
    out.require(worst[i] < 1e-4, std::string(names[i]) + " gradient exceeds 1e-4");
  }
  out.detail << "(" << draws << " draws, " << secs << " s)";
  out.require(secs < 30.0, "runtime over 30 s");
}

void loss_identities(Outcome &out) {
  std::mt19937_64 rng(202);
  std::normal_distribution<double> n(0.0, 2.0);
  std::uniform_real_distribution<double> prob(0.01, 0.99);
  int trials = 0;
  for (int d = 0; d < 200; ++d, ++trials) {
    const Matrix pred = random_matrix(4, 9, rng, 2.0), target = random_matrix(4, 9, rng, 2.0);
    DafParams plain;
    plain.gamma = 0.0;
    plain.alpha = 1.0;
    const auto h = huber_loss(pred, target);
    const auto f = daf_loss(pred, target, plain, IntMatrix::Zero(4, 9));
    out.require(h.value == f.value && h.grad == f.grad, "daf with no focus differs from huber");

    Matrix p(7, 1), t(7, 1);
    for (int i = 0; i < 7; ++i) {
      p(i) = prob(rng);
      t(i) = prob(rng) > 0.5 ? 1.0 : 0.0;
    }
    const auto c = coral_loss(p, t), b = bce_loss(p, t);
    out.require(c.value == b.value && c.grad == b.grad, "two-class coral differs from bce");
  }
  for (double delta : {0.25, 1.0, 3.0}) {
    const double half = 0.5 * delta * delta;
    const double below = detail::huber(std::nextafter(delta, 0.0), delta);
    const double at = detail::huber(delta, delta);
    const double above = detail::huber(std::nextafter(delta, 10.0), delta);
    out.require(std::abs(at - half) <= 1e-15 * half, "huber value at the knee");
    out.require(std::abs(below - half) <= 1e-12 * half && std::abs(above - half) <= 1e-12 * half,
                "huber branches disagree at the knee");
  }
  out.detail << trials << " draws per identity, knee checked at 3 deltas";
}

double model_gradient_error(const ModelConfig &cfg, int steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SequenceModel model(cfg);
  const Matrix x = random_matrix(steps, cfg.input_dim, rng);
  const Matrix up = random_matrix(steps, model.output_dim(), rng);
  ForwardCache cache;
  model.forward(x, &cache);
  const Vector analytic = model.backward(cache, up);
  const Vector base = model.parameters();
  const double h = 1e-6;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < base.size(); ++i) {
    Vector p = base;
    p(i) += h;
    model.set_parameters(p);
    const double plus = (model.forward(x).array() * up.array()).sum();
    p(i) -= 2 * h;
    model.set_parameters(p);
    const double minus = (model.forward(x).array() * up.array()).sum();
    const double numeric = (plus - minus) / (2 * h);
    const double scale = std::max({std::abs(numeric), std::abs(analytic(i)), 1e-4});
    worst = std::max(worst, std::abs(numeric - analytic(i)) / scale);
  }
  return worst;
}

void model_gradients(Outcome &out) {
  const auto t0 = Clock::now();
  struct Case {
    HeadKind head;
    int hidden, steps, layers;
  };
  const std::vector<Case> cases{{HeadKind::Classification, 8, 20, 2},
                                {HeadKind::Regression, 8, 20, 2},
                                {HeadKind::Classification, 5, 12, 1},
                                {HeadKind::Regression, 3, 7, 1}};
  double worst = 0.0;
  std::uint64_t seed = 300;
  for (const auto &c : cases) {
    ModelConfig cfg;
    cfg.input_dim = 5;
    cfg.hidden_dim = c.hidden;
    cfg.layers = c.layers;
    cfg.head = c.head;
    cfg.seed = seed;
    const double e = model_gradient_error(cfg, c.steps, seed++);
    worst = std::max(worst, e);
    out.require(e < 1e-3, std::string(to_string(c.head)) + " head H=" + std::to_string(c.hidden) +
                              " error " + std::to_string(e));
  }
  const double secs = seconds_since(t0);
  out.detail << "worst " << worst << " over " << cases.size() << " models (" << secs << " s)";
  out.require(secs < 120.0, "runtime over 2 min");
}

std::vector<PauseEvent> random_events(std::mt19937_64 &rng, int max_events, int span) {
  std::uniform_int_distribution<int> count(0, max_events), len(3, 40), gap(0, 30), type(1, 3);
  std::vector<PauseEvent> events;
  int t = gap(rng);
  const int k = count(rng);
  for (int i = 0; i < k && t < span; ++i) {
    const int l = len(rng);
    events.push_back({t, t + l, static_cast<PauseType>(type(rng))});
    t += l + 1 + gap(rng);
  }
  return events;
}

int agreeing(const MatchResult &r) {
  return static_cast<int>(
      std::count_if(r.pairs.begin(), r.pairs.end(), [](auto &p) { return p.label_agree; }));
}

void matching(Outcome &out) {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> jitter(-12, 12), type(1, 3), flip(0, 3);
  int beaten = 0, greedy_total = 0, oracle_total = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const auto gt = random_events(rng, 8, 600);
    std::vector<PauseEvent> pred;
    for (const auto &e : gt) {
      PauseEvent p{std::max(0, e.onset + jitter(rng)), 0, e.type};
      p.offset = std::max(p.onset + 1, e.offset + jitter(rng));
      if (flip(rng) == 0)
        p.type = static_cast<PauseType>(type(rng));
      pred.push_back(p);
    }
    for (const auto &e : random_events(rng, 3, 600))
      if (pred.size() < 8)
        pred.push_back(e);
    const int g = agreeing(greedy_match(gt, pred)), o = agreeing(oracle_match(gt, pred));
    greedy_total += g;
    oracle_total += o;
    beaten += g > o ? 1 : 0;
  }
  out.require(beaten == 0, std::to_string(beaten) + " instances where greedy beat the oracle");

  MatchConfig cfg;
  std::uniform_int_distribution<int> small(-cfg.tolerance_frames / 2, cfg.tolerance_frames / 2);
  int checked = 0, recovered = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const auto gt = random_events(rng, 8, 800);
    std::vector<PauseEvent> pred;
    bool valid = true;
    for (const auto &e : gt) {
      PauseEvent p{e.onset + small(rng), e.offset + small(rng), e.type};
      if (p.onset < 0 || p.offset <= p.onset ||
          overlap_frames(e, p) < cfg.min_overlap_ratio * e.length())
        valid = false;
      pred.push_back(p);
    }
    if (!valid)
      continue;
    ++checked;
    recovered += static_cast<std::size_t>(agreeing(greedy_match(gt, pred, cfg))) == gt.size() ? 1 : 0;
  }
  out.require(recovered == checked, "half-tolerance recovery " + std::to_string(recovered) + "/" +
                                        std::to_string(checked));
  out.detail << "greedy " << greedy_total << " vs oracle " << oracle_total
             << " agreeing pairs over 1000 instances; recovery " << recovered << "/" << checked;
}

double middle_peak(const std::vector<double> &v) {
  double m = 0.0;
  for (std::size_t t = v.size() / 4; t < 3 * v.size() / 4; ++t)
    m = std::max(m, std::abs(v[t]));
  return m;
}

std::vector<double> sine(int n, double freq_hz) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t)
    v[static_cast<std::size_t>(t)] =
        std::sin(2 * std::numbers::pi * freq_hz * t / static_cast<double>(kFrameRateHz));
  return v;
}

void postprocessing(Outcome &out) {
  std::mt19937_64 rng(505);
  std::uniform_int_distribution<int> c(0, 3), len(1, 6), size(1, 120);
  int unstable = 0;
  for (int i = 0; i < 10000; ++i) {
    const int n = size(rng);
    std::vector<int> codes;
    while (static_cast<int>(codes.size()) < n) {
      const int v = c(rng), l = len(rng);
      for (int k = 0; k < l && static_cast<int>(codes.size()) < n; ++k)
        codes.push_back(v);
    }
    const auto once = clean_classification(FrameLabelSeq::from_codes(codes));
    unstable += clean_classification(once) == once ? 0 : 1;
  }
  out.require(unstable == 0, std::to_string(unstable) + " sequences changed on a second pass");

  const auto short_event = clean_classification(FrameLabelSeq::from_codes({0, 2, 2, 0})).codes();
  out.require(short_event == std::vector<int>{0, 0, 0, 0}, "[0,2,2,0] is not cleared");

  std::ostringstream gains;
  for (double cutoff : {0.05, 0.5, 2.0}) {
    const int n = static_cast<int>(200.0 * kFrameRateHz / cutoff * 0.1) + 4000;
    const double pass = middle_peak(lowpass(sine(n, cutoff / 5), cutoff));
    const double stop = middle_peak(lowpass(sine(n, cutoff * 10), cutoff));
    gains << " cutoff " << cutoff << ": " << pass << "/" << stop;
    out.require(pass >= 0.95, "passband gain " + std::to_string(pass));
    out.require(stop <= 0.1, "stopband gain " + std::to_string(stop));
  }
  out.detail << "10000 sequences idempotent, gains" << gains.str();
}

SynthCorpusConfig small_fusion_corpus() {
  SynthCorpusConfig c;
  c.recordings = 14;
  c.subjects = 7;
  c.duration_range_s = {16.0, 18.0};
  c.embeddings = {FeatureKind::EMB4};
  c.seed = 606;
  return c;
}

PipelineConfig small_pipeline(const fs::path &manifest, int setup) {
  PipelineConfig cfg;
  cfg.manifest = manifest;
  cfg.setup = setup;
  cfg.model.hidden_dim = 4;
  cfg.model.layers = 1;
  cfg.train.max_epochs = 2;
  cfg.train.batch_size = 16;
  cfg.train.adam.learning_rate = 0.01;
  cfg.train_stride_s = 2.0;
  return cfg;
}

void pipeline_equivalence(Outcome &out) {
  const auto dir = fs::temp_directory_path() / "pausebench_acceptance_fusion";
  fs::remove_all(dir);
  write_synth_corpus(dir, small_fusion_corpus());
  const json two = run_pipeline(small_pipeline(dir / "manifest.json", 2));
  PipelineConfig cfg = small_pipeline(dir / "manifest.json", 3);
  cfg.stage1_stub_ones = true;
  const json three = run_pipeline(cfg);
  out.require(three.at("results") == two.at("results"), "results differ");
  out.require(three.at("training") == two.at("training"), "training history differs");
  out.require(three.at("postproc") == two.at("postproc"), "post-processing differs");
  const int d2 = two.at("config").at("model").at("input_dim");
  const int d3 = three.at("config").at("model").at("input_dim");
  out.require(kAcousticDims + kEmbeddingDims == 808 && d2 == 808 && d3 == 808,
              "fused width " + std::to_string(d2) + "/" + std::to_string(d3));
  out.detail << "results, training and post-processing identical; fused width " << d2;
}

json e2e_report(const fs::path &manifest, int epochs) {
  PipelineConfig cfg;
  cfg.manifest = manifest;
  cfg.setup = 1;
  cfg.task = TaskKind::Classification;
  cfg.model.hidden_dim = 32;
  cfg.train.batch_size = 16;
  cfg.train.adam.learning_rate = 0.01;
  cfg.train.max_epochs = epochs;
  return run_pipeline(cfg);
}

void end_to_end(Outcome &out, json &report) {
  const auto dir = fs::temp_directory_path() / "pausebench_acceptance_e2e";
  fs::remove_all(dir);
  SynthCorpusConfig corpus;
  corpus.recordings = 60;
  corpus.noise = 1.0;
  corpus.margin = 10.0;
  corpus.seed = 7;
  write_synth_corpus(dir, corpus);

  const auto t0 = Clock::now();
  report = e2e_report(dir / "manifest.json", 8);
  const double secs = seconds_since(t0);
  const auto &m = report.at("results").at("metrics");
  const json overall = m.at("overall");
  const double acc = overall.is_number() ? overall.get<double>() : 0.0;
  out.detail << "overall " << acc;
  out.require(acc >= 0.85, "overall below 0.85");
  for (const char *type : {"S", "B", "BS"}) {
    const json v = m.at("per_type").at(type);
    const double a = v.is_number() ? v.get<double>() : 0.0;
    out.detail << " " << type << " " << a;
    out.require(a >= 0.70, std::string(type) + " below 0.70");
  }
  out.detail << " (" << secs << " s)";
  out.require(secs < 300.0, "runtime over 5 min");

  const json again = e2e_report(dir / "manifest.json", 8);
  out.require(again == report, "second run differs");
}

void protocol_constants(Outcome &out, const json &e2e) {
  const PipelineConfig defaults;
  const json p = protocol_block(defaults);
  out.require(p.at("frame_rate_hz") == 50 && kFrameRateHz == 50, "frame rate");
  out.require(p.at("window_frames") == 750 && kWindowFrames == 750, "window length");
  out.require(p.at("train_stride_s") == 1.0, "training stride");
  out.require(p.at("tolerance_frames") == 10, "tolerance");
  out.require(p.at("min_overlap_ratio") == 0.3, "overlap");
  out.require(p.at("mask_tail_frames") == 50, "tail mask");
  out.require(p.at("batch_size") == 64, "batch size");
  out.require(p.at("learning_rate") == 1e-4, "learning rate");
  out.require(p.at("exertion_clustering") == json{{"Low", {1, 2}}, {"High", {3, 4, 5}}},
              "exertion clustering in report");
  for (int raw = 1; raw <= 5; ++raw)
    out.require(cluster_exertion(raw).binary ==
                    (raw <= 2 ? ExertionClass::Low : ExertionClass::High),
                "clustering of level " + std::to_string(raw));
  if (!e2e.is_null()) {
    out.require(e2e.contains("protocol"), "report lacks a protocol block");
    out.require(e2e.at("protocol").at("window_frames") == 750, "report window length");
  }
  out.detail << "defaults and report protocol block verified";
}

void majority(Outcome &out) {
  auto vote = [](int a, int b, int c) {
    return majority_vote({{"r", "a", FrameLabelSeq::from_codes({a})},
                          {"r", "b", FrameLabelSeq::from_codes({b})},
                          {"r", "c", FrameLabelSeq::from_codes({c})}})
        .codes()[0];
  };
  int cases = 0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      for (int c = 0; c < 4; ++c, ++cases) {
        const int v = vote(a, b, c);
        std::array<int, 3> p{a, b, c};
        std::sort(p.begin(), p.end());
        do {
          out.require(vote(p[0], p[1], p[2]) == v, "order dependence");
        } while (std::next_permutation(p.begin(), p.end()));
        if (a == b && b == c)
          out.require(v == a, "unanimous vote changed");
      }
  out.detail << cases << " combinations with all orderings";
}

} // namespace

int main() {
  int failed = 0;
  json e2e;
  const std::vector<std::pair<std::string, std::function<void(Outcome &)>>> criteria{
      {"loss gradients", loss_gradients},
      {"loss identities", loss_identities},
      {"recurrent model gradients", model_gradients},
      {"matching oracle", matching},
      {"post-processing", postprocessing},
      {"pipeline equivalences", pipeline_equivalence},
      {"end-to-end synthetic", [&](Outcome &o) { end_to_end(o, e2e); }},
      {"protocol constants", [&](Outcome &o) { protocol_constants(o, e2e); }},
      {"majority vote", majority},
  };
  for (const auto &[name, check] : criteria) {
    Outcome o;
    try {
      check(o);
    } catch (const std::exception &e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failed += o.pass ? 0 : 1;
    std::string text = o.detail.str();
    for (const auto &f : o.failures)
      text += " | " + f;
    std::printf("%s  %s  %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), text.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed;
}
