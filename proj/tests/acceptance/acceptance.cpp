// Acceptance checks: one PASS/FAIL line per criterion, exit 0 only if all pass.

#include <CLI11.hpp>
#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "xmh/attention.hpp"
#include "xmh/cli.hpp"
#include "xmh/data.hpp"
#include "xmh/gradcheck_suite.hpp"
#include "xmh/losses.hpp"
#include "xmh/numkernel.hpp"
#include "xmh/retrieval.hpp"
#include "xmh/rng.hpp"
#include "xmh/trainer.hpp"

using namespace xmh;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "xmh");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  if (r.code != kExitOk) {
    std::ostringstream msg;
    msg << "xmh";
    for (std::size_t i = 1; i < args.size(); ++i) msg << ' ' << args[i];
    msg << " exited " << r.code << ": " << r.err;
    throw std::runtime_error(msg.str());
  }
  return r;
}

double number_after(const std::string& text, const std::string& key) {
  const auto pos = text.find(key);
  if (pos == std::string::npos) throw std::runtime_error("'" + key + "' not found in: " + text);
  return std::stod(text.substr(pos + key.size()));
}

// ---------------------------------------------------------------------------

Outcome reproducibility_statement() {
  return {true,
          "published benchmark MAP values need ImageNet-pretrained VGG features and the full benchmark "
          "datasets; they are not reproduced here. Acceptance rests on the property suites and the "
          "synthetic end-to-end run below"};
}

Outcome gradient_suite() {
  GradcheckSuiteOptions opts;
  const GradcheckSuiteReport report = run_gradcheck_suite(opts);
  double worst = 0.0;
  std::size_t min_instances = SIZE_MAX;
  std::string failed;
  for (const auto& e : report.entries) {
    worst = std::max(worst, e.max_rel_error);
    min_instances = std::min(min_instances, e.instances);
    if (!e.passed) failed += " " + e.name;
  }
  opts.inject_tanh_sign_fault = true;
  const bool mutant_caught = !run_gradcheck_suite(opts).passed();
  const bool ok = report.passed() && report.seconds < 60.0 && min_instances >= 20 && mutant_caught;
  std::string d = std::to_string(report.entries.size()) + " ops, >= " + std::to_string(min_instances) +
                  " instances each, max rel err " + fmt(worst * 1e6, 3) + "e-6 (tol 1e-4), " +
                  fmt(report.seconds, 2) + " s; tanh sign mutant " + (mutant_caught ? "caught" : "NOT caught");
  if (!failed.empty()) d += "; failing:" + failed;
  return {ok, d};
}

Outcome ste_contract() {
  Rng rng(11);
  std::size_t cases = 0, mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor g = Tensor::uniform({3, 4, 4}, 10.0, rng);
    const Tensor direct = threshold_ste_backward(g);
    cases += g.size();
    for (std::size_t i = 0; i < g.size(); ++i) mismatches += !same_bits(g[i], direct[i]);

    // Through the attention backward: cotangent at p must equal that at z.
    const Tensor feats = Tensor::uniform({2, 4, 4, 3}, 1.0, rng);
    ImageMaskParams ip = ImageMaskParams::init(3, rng);
    AttentionCache ic;
    image_mask(feats, ip, {}, &ic);
    const AttentionGrads ig = image_attention_backward(ic, ip, Tensor::uniform(feats.shape(), 1.0, rng),
                                                       Tensor::uniform(feats.shape(), 1.0, rng), true);
    const Tensor text_feats = Tensor::uniform({2, 6}, 1.0, rng);
    TextMaskParams tp = TextMaskParams::init(6, rng);
    AttentionCache tc;
    text_mask(text_feats, tp, {}, &tc);
    const AttentionGrads tg = text_attention_backward(tc, tp, Tensor::uniform(text_feats.shape(), 1.0, rng),
                                                      Tensor::uniform(text_feats.shape(), 1.0, rng), true);
    for (const AttentionGrads* ag : {&ig, &tg}) {
      cases += ag->mask.size();
      for (std::size_t i = 0; i < ag->mask.size(); ++i) {
        mismatches += !same_bits(ag->mask[i], ag->distribution[i]);
      }
    }
  }
  return {mismatches == 0, std::to_string(cases) + " cotangent entries compared bitwise, " +
                               std::to_string(mismatches) + " mismatches"};
}

Outcome mask_algebra() {
  Rng rng(12);
  std::size_t non_binary = 0, split_mismatch = 0, sum_violations = 0, empty = 0;
  double worst_sum = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t h = 2 + rng.below(7), w = 2 + rng.below(7), c = 1 + rng.below(6);
    const Tensor f = Tensor::uniform({h, w, c}, 1.0 + static_cast<double>(rng.below(20)), rng);
    const ImageMaskParams p = ImageMaskParams::init(c, rng);
    const AttentionMask m = image_mask(f, p);
    double sum = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < m.binary.size(); ++i) {
      non_binary += !(m.binary[i] == 0.0 || m.binary[i] == 1.0);
      any = any || m.binary[i] == 1.0;
      sum += m.distribution[i];
      if ((m.distribution[i] >= m.alpha) != (m.binary[i] == 1.0)) ++non_binary;
    }
    empty += !any;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    sum_violations += std::abs(sum - 1.0) > 1e-9;
    const SplitFeatures s = split(f, m.binary);
    for (std::size_t i = 0; i < f.size(); ++i) split_mismatch += s.foreground[i] + s.background[i] != f[i];
  }
  // Uniform pre-mask: zero projection gives m constant over the grid.
  bool uniform_all_ones = true;
  for (std::size_t side : {2u, 4u, 7u, 8u}) {
    ImageMaskParams p = ImageMaskParams::init(3, rng);
    p.proj.weight.value.fill(0.0);
    p.proj.bias.value.fill(0.37);
    const AttentionMask m = image_mask(Tensor::uniform({side, side, 3}, 1.0, rng), p);
    for (double z : m.binary.data()) uniform_all_ones = uniform_all_ones && z == 1.0;
  }
  const bool ok = non_binary == 0 && split_mismatch == 0 && sum_violations == 0 && uniform_all_ones;
  return {ok, "1000 grids: non-binary/threshold mismatches " + std::to_string(non_binary) + ", split mismatches " +
                  std::to_string(split_mismatch) + ", max |sum p - 1| " + fmt(worst_sum * 1e15, 2) +
                  "e-15, uniform m -> all ones " + (uniform_all_ones ? "yes" : "NO") + " (" +
                  std::to_string(empty) + " grids had an empty mask)"};
}

// Brute-force re-summation of the six triplet terms, written independently
// of the library: explicit loops over the triples and a hand-written hinge.
double oracle_term(const Tensor& anchors, const Tensor& db, const TripletBatch& batch, double margin) {
  double total = 0.0;
  const std::size_t q = anchors.extent(1);
  for (const auto& t : batch.triples) {
    double dp = 0.0, dn = 0.0;
    const auto a = anchors.row(t.anchor), p = db.row(t.positive), n = db.row(t.negative);
    for (std::size_t k = 0; k < q; ++k) {
      dp += (a[k] - p[k]) * (a[k] - p[k]);
      dn += (a[k] - n[k]) * (a[k] - n[k]);
    }
    total += std::max(0.0, margin + dp - dn);
  }
  return total;
}

Outcome loss_oracle() {
  Rng rng(13);
  double worst = 0.0;
  std::size_t triples = 0, invalid = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t b = 2 + rng.below(31);
    const std::size_t q = 4 + rng.below(61);
    const std::size_t classes = 2 + rng.below(5);
    std::vector<LabelSet> labels(b + 5);
    for (auto& l : labels) {
      std::set<std::uint32_t> s;
      const std::size_t k = 1 + rng.below(2);
      while (s.size() < k) s.insert(static_cast<std::uint32_t>(rng.below(classes)));
      l.assign(s.begin(), s.end());
    }
    const SimilarityMatrix sim = build_similarity(labels);
    std::vector<std::uint32_t> ids(labels.size());
    std::iota(ids.begin(), ids.end(), 0u);
    rng.shuffle(std::span<std::uint32_t>(ids));
    ids.resize(b);

    const TripletSet set = sample_all_directions(sim, ids, 1 + rng.below(4), rng);
    BatchCodes codes{Tensor::uniform({b, q}, 1.0, rng), Tensor::uniform({b, q}, 1.0, rng),
                     Tensor::uniform({b, q}, 1.0, rng), Tensor::uniform({b, q}, 1.0, rng)};
    LossConfig cfg = LossConfig::for_bits(q);
    const LossBreakdown cm = cross_modal_loss(codes, set, cfg);
    const LossBreakdown adv = adversarial_loss(codes, set, cfg);
    const std::array<std::pair<const Tensor*, const Tensor*>, kDirectionCount> tables{{
        {&codes.text, &codes.image},
        {&codes.image, &codes.text},
        {&codes.image, &codes.image},
        {&codes.text, &codes.text},
        {&codes.text, &codes.image_background},
        {&codes.image, &codes.text_background},
    }};
    for (std::size_t d = 0; d < kDirectionCount; ++d) {
      const double expected = oracle_term(*tables[d].first, *tables[d].second, set[d], cfg.margin);
      const double got = d < 4 ? cm.terms[d] : adv.terms[d];
      worst = std::max(worst, std::abs(got - expected));
      for (const auto& t : set[d].triples) {
        ++triples;
        auto shares = [&](std::uint32_t x, std::uint32_t y) {
          const auto& a = labels[ids[x]];
          const auto& c = labels[ids[y]];
          for (auto u : a) {
            if (std::find(c.begin(), c.end(), u) != c.end()) return true;
          }
          return false;
        };
        const bool self = is_intra_modal(static_cast<Direction>(d)) && t.positive == t.anchor;
        invalid += !shares(t.anchor, t.positive) || shares(t.anchor, t.negative) || self;
      }
    }
  }
  return {worst <= 1e-10 && invalid == 0 && triples > 0,
          "300 random batches (<= 32 codes): max |loss - oracle| " + fmt(worst * 1e12, 3) + "e-12; " +
              std::to_string(triples) + " sampled triples, " + std::to_string(invalid) + " invalid"};
}

double oracle_ap(const std::vector<std::uint8_t>& rel) {
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < rel.size(); ++k) {
    if (rel[k]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return hits ? sum / static_cast<double>(hits) : 0.0;
}

Outcome retrieval_oracle() {
  Rng rng(14);
  std::size_t rank_mismatch = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t q = 1 + rng.below(150);
    const std::size_t n = 1 + rng.below(64);
    auto random_code = [&] {
      BinaryCode c;
      for (std::size_t i = 0; i < q; ++i) c.bits.push_back(rng.below(2) ? 1 : -1);
      return c;
    };
    CodeDatabase db(Modality::Image, q);
    std::vector<std::pair<std::uint64_t, BinaryCode>> items;
    std::set<std::uint64_t> used;
    while (items.size() < n) {
      const std::uint64_t id = rng.below(1000);
      if (!used.insert(id).second) continue;
      // Low-entropy codes so that ties are common.
      BinaryCode c = rng.below(3) == 0 && !items.empty() ? items[rng.below(items.size())].second : random_code();
      items.emplace_back(id, c);
      db.add(id, c);
    }
    const BinaryCode query = random_code();
    std::vector<std::pair<std::uint32_t, std::uint64_t>> naive;
    for (const auto& [id, c] : items) {
      std::uint32_t d = 0;
      for (std::size_t i = 0; i < q; ++i) d += c.bits[i] != query.bits[i];
      naive.emplace_back(d, id);
    }
    std::sort(naive.begin(), naive.end());
    const RetrievalResult r = hamming_rank(query, db);
    bool same = r.ranking.size() == naive.size();
    for (std::size_t i = 0; same && i < naive.size(); ++i) {
      same = r.ranking[i].distance == naive[i].first && r.ranking[i].id == naive[i].second;
    }
    rank_mismatch += !same;
  }

  double worst = 0.0;
  std::size_t rankings = 0;
  for (std::size_t len = 1; len <= 8; ++len) {
    for (std::size_t mask = 0; mask < (1u << len); ++mask) {
      std::vector<std::uint8_t> rel(len);
      for (std::size_t k = 0; k < len; ++k) rel[k] = (mask >> k) & 1u;
      worst = std::max(worst, std::abs(average_precision(rel) - oracle_ap(rel)));
      ++rankings;
    }
  }
  const std::vector<std::uint8_t> example{0, 1, 1};
  const double ex = average_precision(example);
  const bool ok = rank_mismatch == 0 && worst <= 1e-12 && std::abs(ex - 7.0 / 12.0) <= 1e-12;
  return {ok, "1000 packed-vs-naive rankings, " + std::to_string(rank_mismatch) + " mismatches; " +
                  std::to_string(rankings) + " exhaustive AP rankings, max err " + fmt(worst * 1e15, 3) +
                  "e-15; AP[0,1,1] = " + fmt(ex, 6)};
}

std::vector<std::vector<double>> snapshot(const ParamList& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params) {
    auto d = p.tensor->value.data();
    out.emplace_back(d.begin(), d.end());
  }
  return out;
}

Outcome alternation(const fs::path& data_dir, const fs::path& work) {
  const PairedDataset data = load_dataset(data_dir);
  TrainConfig cfg;
  cfg.epochs = 2;
  std::vector<std::vector<double>> ed_before, g_before;
  std::size_t steps = 0, freeze_violations = 0, no_update = 0;
  TrainOutputs outputs;
  outputs.dir = work / "alternation";
  outputs.step_hooks.before = [&](Phase, Model& m) {
    ed_before = snapshot(m.encoder_discriminator_params());
    g_before = snapshot(m.generator_params());
  };
  outputs.step_hooks.after = [&](const TrainLogRecord& r, Model& m) {
    ++steps;
    const bool ed_same = snapshot(m.encoder_discriminator_params()) == ed_before;
    const bool g_same = snapshot(m.generator_params()) == g_before;
    if (r.phase == Phase::Discriminator) {
      freeze_violations += !g_same;
      no_update += ed_same;
    } else {
      freeze_violations += !ed_same;
      no_update += g_same;
    }
  };
  train(data, cfg, outputs);

  // The pattern is read back from the written log, not from the hooks.
  std::ifstream log(work / "alternation" / "log.tsv");
  std::string line, pattern;
  std::size_t expected_step = 0;
  bool steps_ok = true;
  while (std::getline(log, line)) {
    if (line.empty() || line[0] == '#') continue;
    const TrainLogRecord r = parse_log_line(line);
    steps_ok = steps_ok && r.step == expected_step++;
    pattern += r.phase == Phase::Discriminator ? 'D' : 'G';
  }
  bool pattern_ok = !pattern.empty();
  std::size_t g_count = 0;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    pattern_ok = pattern_ok && pattern[i] == (i % 5 == 4 ? 'G' : 'D');
    g_count += pattern[i] == 'G';
  }
  const bool ok = pattern_ok && steps_ok && steps == pattern.size() && freeze_violations == 0 && no_update == 0;
  return {ok, "2 epochs, " + std::to_string(pattern.size()) + " logged steps (" + std::to_string(g_count) +
                  " G), pattern " + pattern + "; freeze violations " + std::to_string(freeze_violations) +
                  ", steps without an update " + std::to_string(no_update)};
}

struct E2eRun {
  double seconds = 0.0;
  std::map<std::string, double> map;  // keyed by query/db variant
  double iou = 0.0;
  double baseline = 0.0;
  double occupancy = 0.0;
  std::map<std::string, std::string> artifacts;  // name -> bytes, for determinism
};

E2eRun run_pipeline(const fs::path& data, const fs::path& dir, const std::string& config_text) {
  const auto t0 = Clock::now();
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "config.txt") << config_text;
  cli({"train", "--data", data.string(), "--config", (dir / "config.txt").string(), "--out", (dir / "run").string()});
  const std::string ckpt = (dir / "run" / "model.ckpt").string();
  auto codes = [&](const std::string& split, const std::string& m) { return (dir / (split + "_" + m + ".codes")).string(); };
  for (const std::string m : {"image", "text"}) {
    for (const std::string s : {"test", "retrieval"}) {
      cli({"encode", "--data", data.string(), "--checkpoint", ckpt, "--split", s, "--modality", m, "--out",
           codes(s, m), "--with-background"});
    }
  }
  E2eRun r;
  const fs::path reports = dir / "reports";
  auto eval = [&](const std::string& key, const std::string& queries, const std::string& db, const std::string& d) {
    const CliRun e = cli({"eval", "--queries", queries, "--db", db, "--data", data.string(), "--direction", d, "--out",
                          reports.string(), "--tag", key});
    r.map[key] = number_after(e.out, "MAP: ");
  };
  const std::string bg = ".background";
  eval("t2i", codes("test", "text"), codes("retrieval", "image"), "t2i");
  eval("i2t", codes("test", "image"), codes("retrieval", "text"), "i2t");
  eval("t2i_fg_bg", codes("test", "text"), codes("retrieval", "image") + bg, "t2i");
  eval("i2t_fg_bg", codes("test", "image"), codes("retrieval", "text") + bg, "i2t");
  eval("t2i_bg_bg", codes("test", "text") + bg, codes("retrieval", "image") + bg, "t2i");
  eval("i2t_bg_bg", codes("test", "image") + bg, codes("retrieval", "text") + bg, "i2t");
  const CliRun ms = cli({"mask-stats", "--data", data.string(), "--checkpoint", ckpt, "--split", "test", "--out",
                         (dir / "mask_stats.csv").string()});
  r.occupancy = number_after(ms.out, "mean occupancy ");
  r.iou = number_after(ms.out, "mean IoU ");
  r.baseline = number_after(ms.out, "random-rectangle baseline ");
  r.seconds = seconds_since(t0);

  r.artifacts["log.tsv"] = slurp(dir / "run" / "log.tsv");
  r.artifacts["model.ckpt"] = slurp(dir / "run" / "model.ckpt");
  r.artifacts["mask_stats.csv"] = slurp(dir / "mask_stats.csv");
  for (const auto& entry : fs::directory_iterator(reports)) {
    r.artifacts["reports/" + entry.path().filename().string()] = slurp(entry.path());
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".codes" || entry.path().extension() == ".background") {
      r.artifacts[entry.path().filename().string()] = slurp(entry.path());
    }
  }
  return r;
}

Outcome end_to_end(const E2eRun& r) {
  const double t2i = r.map.at("t2i"), i2t = r.map.at("i2t");
  const double gap_t2i = t2i - r.map.at("t2i_fg_bg"), gap_i2t = i2t - r.map.at("i2t_fg_bg");
  const bool a = t2i >= 0.85 && i2t >= 0.85;
  const bool b = gap_t2i >= 0.10 && gap_i2t >= 0.10;
  const bool c = r.iou - r.baseline >= 0.10;
  const bool time_ok = r.seconds <= 15 * 60;
  std::string d = "(a) fg MAP T->I " + fmt(t2i) + ", I->T " + fmt(i2t) + " [>= 0.85 " + (a ? "ok" : "FAIL") + "]";
  d += "; (b) fg query vs bg db MAP T->I " + fmt(r.map.at("t2i_fg_bg")) + " (gap " + fmt(gap_t2i) + "), I->T " +
       fmt(r.map.at("i2t_fg_bg")) + " (gap " + fmt(gap_i2t) + ") [gap >= 0.10 " + (b ? "ok" : "FAIL") + "]";
  d += "; diagnostic bg query vs bg db T->I " + fmt(r.map.at("t2i_bg_bg")) + ", I->T " + fmt(r.map.at("i2t_bg_bg"));
  d += "; (c) mask IoU " + fmt(r.iou) + " vs random-rectangle " + fmt(r.baseline) + " [margin >= 0.10 " +
       (c ? "ok" : "FAIL") + "], occupancy " + fmt(r.occupancy);
  d += "; " + fmt(r.seconds, 1) + " s [<= 900 " + (time_ok ? "ok" : "FAIL") + "]";
  return {a && b && c && time_ok, d};
}

Outcome determinism(const E2eRun& x, const E2eRun& y) {
  std::vector<std::string> differing;
  for (const auto& [name, bytes] : x.artifacts) {
    auto it = y.artifacts.find(name);
    if (it == y.artifacts.end() || it->second != bytes) differing.push_back(name);
  }
  const bool ok = differing.empty() && x.artifacts.size() == y.artifacts.size() && x.artifacts.count("log.tsv") &&
                  !x.artifacts.at("log.tsv").empty();
  std::string d = "two identical end-to-end runs: " + std::to_string(x.artifacts.size()) +
                  " artifacts (log, checkpoint, codes, eval reports, mask stats) compared bytewise";
  for (const auto& n : differing) d += "; differs: " + n;
  return {ok, d};
}

Outcome code_length_sweep(const std::map<std::size_t, E2eRun>& runs) {
  bool ok = true;
  std::string d;
  const E2eRun* prev = nullptr;
  for (const auto& [q, r] : runs) {
    d += (d.empty() ? "" : ", ") + std::string("q=") + std::to_string(q) + " T->I " + fmt(r.map.at("t2i")) +
         " I->T " + fmt(r.map.at("i2t"));
    if (prev) {
      ok = ok && r.map.at("t2i") >= prev->map.at("t2i") - 0.03 && r.map.at("i2t") >= prev->map.at("i2t") - 0.03;
    }
    prev = &r;
  }
  return {ok, d + " (non-decreasing within 0.03)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"xmh acceptance checks"};
  fs::path workdir = fs::temp_directory_path() / "xmh_acceptance";
  bool quick = false;
  app.add_option("--workdir", workdir, "Scratch directory");
  app.add_flag("--quick", quick, "Skip the training-based checks");
  CLI11_PARSE(app, argc, argv);

  bool all = true;
  auto report = [&all](const std::string& name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    all = all && o.passed;
    std::cout << (o.passed ? "PASS" : "FAIL") << "  " << name << ": " << o.detail << std::endl;
  };

  report("reproducibility statement", reproducibility_statement);
  report("gradient suite", gradient_suite);
  report("straight-through contract", ste_contract);
  report("mask algebra", mask_algebra);
  report("loss oracle", loss_oracle);
  report("retrieval oracle", retrieval_oracle);
  if (quick) {
    std::cout << "SKIP  training-based checks (--quick)" << std::endl;
    return all ? 0 : 1;
  }

  fs::remove_all(workdir);
  fs::create_directories(workdir);
  const fs::path data = workdir / "data";
  try {
    cli({"gen-data", "--out", data.string(), "--n", "2400", "--classes", "4", "--test", "200", "--train", "1000"});
  } catch (const std::exception& e) {
    std::cout << "FAIL  dataset generation: " << e.what() << std::endl;
    return 1;
  }

  report("alternation contract", [&] { return alternation(data, workdir); });

  std::map<std::size_t, E2eRun> sweep;
  std::optional<E2eRun> repeat;
  auto run_q = [&](std::size_t q) -> E2eRun& {
    if (!sweep.count(q)) {
      sweep[q] = run_pipeline(data, workdir / ("q" + std::to_string(q)), q == 16 ? "" : "q = " + std::to_string(q) + "\n");
    }
    return sweep.at(q);
  };
  report("end-to-end synthetic run", [&] { return end_to_end(run_q(16)); });
  report("determinism", [&] {
    repeat = run_pipeline(data, workdir / "q16_repeat", "");
    return determinism(run_q(16), *repeat);
  });
  report("code-length sweep", [&] {
    for (std::size_t q : {16u, 32u, 64u}) run_q(q);
    return code_length_sweep(sweep);
  });
  return all ? 0 : 1;
}
