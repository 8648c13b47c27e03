#include "xmh/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "binary_io.hpp"
#include "xmh/data.hpp"
#include "xmh/errors.hpp"
#include "xmh/gradcheck_suite.hpp"
#include "xmh/mask_stats.hpp"
#include "xmh/model.hpp"
#include "xmh/retrieval.hpp"
#include "xmh/trainer.hpp"

namespace xmh {

namespace fs = std::filesystem;

namespace {

struct GenDataArgs {
  fs::path out;
  SyntheticConfig synth;
  std::size_t test = 200;
  std::size_t train = 1000;
  bool force = false;
};

struct TrainArgs {
  fs::path data;
  fs::path config;
  fs::path out;
};

struct EncodeArgs {
  fs::path data;
  fs::path checkpoint;
  std::string split = "test";
  std::string modality;
  fs::path out;
  fs::path dump_masks;
  fs::path text_out;
  bool with_background = false;
  std::size_t bits = 0;
};

struct RetrieveArgs {
  fs::path queries;
  fs::path db;
  std::uint64_t query_id = 0;
  std::size_t top = 10;
};

struct EvalArgs {
  fs::path queries;
  fs::path db;
  fs::path data;
  std::string direction;
  std::size_t map_at = 0;
  fs::path out;
  std::string tag;
};

struct GradcheckArgs {
  std::uint64_t seed = 1;
  double tol = 1e-4;
  std::size_t instances = 20;
  std::string inject_fault;
};

struct MaskStatsArgs {
  fs::path data;
  fs::path checkpoint;
  std::string split = "test";
  fs::path out;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_atomically(path, [&](std::ostream& os) { os << text; });
}

IndexList split_ids(const PairedDataset& data, const std::string& name) {
  if (name == "test") return data.splits.test;
  if (name == "retrieval") return data.splits.retrieval;
  if (name == "train") return data.splits.train;
  if (name == "all") {
    IndexList all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);
    return all;
  }
  throw ConfigError("unknown split '" + name + "' (expected test, retrieval, train or all)");
}

struct DirectionSpec {
  std::string name;
  Modality query;
  Modality database;
};

DirectionSpec parse_direction(const std::string& d) {
  if (d == "t2i" || d == "T2I" || d == "T->I") return {"T2I", Modality::Text, Modality::Image};
  if (d == "i2t" || d == "I2T" || d == "I->T") return {"I2T", Modality::Image, Modality::Text};
  if (d == "i2i" || d == "I2I" || d == "I->I") return {"I2I", Modality::Image, Modality::Image};
  if (d == "t2t" || d == "T2T" || d == "T->T") return {"T2T", Modality::Text, Modality::Text};
  throw ConfigError("unknown direction '" + d + "' (expected t2i, i2t, i2i or t2t)");
}

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  if (fs::exists(a.out) && !fs::is_directory(a.out)) throw ConfigError(a.out.string() + " exists and is not a directory");
  if (fs::is_directory(a.out) && !fs::is_empty(a.out) && !a.force) {
    throw ConfigError("output directory " + a.out.string() + " is not empty (use --force)");
  }
  PairedDataset data = generate_synthetic(a.synth);
  data.splits = make_splits(data.size(), a.test, a.train, a.synth.seed);
  save_dataset(data, a.out);
  out << "wrote " << data.size() << " instances (" << data.splits.test.size() << " test, "
      << data.splits.retrieval.size() << " retrieval, " << data.splits.train.size() << " train) to "
      << a.out.string() << '\n';
  return kExitOk;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const PairedDataset data = load_dataset(a.data);
  const TrainConfig cfg = a.config.empty() ? TrainConfig{} : TrainConfig::load(a.config);
  TrainOutputs outputs;
  outputs.dir = a.out;
  outputs.on_epoch = [&out](const EpochSummary& s) {
    out << "epoch " << s.epoch << "\tlr " << io::format_double(s.lr) << "\tcross " << std::fixed
        << std::setprecision(4) << s.mean_cross_modal << "\tadv " << s.mean_adversarial << "\tocc_image "
        << s.image_occupancy << "\tocc_text " << s.text_occupancy << std::defaultfloat << '\n';
    out.flush();
  };
  train(data, cfg, outputs);
  out << "wrote " << (a.out / "model.ckpt").string() << '\n';
  return kExitOk;
}

int cmd_encode(const EncodeArgs& a, std::ostream& out) {
  const PairedDataset data = load_dataset(a.data);
  const Model model = load_checkpoint(a.checkpoint);
  if (a.bits != 0 && a.bits != model.config.bits) {
    throw ConfigError("--bits " + std::to_string(a.bits) + " does not match the checkpoint (q = " +
                      std::to_string(model.config.bits) + ")");
  }
  const IndexList ids = split_ids(data, a.split);
  EncodeOptions opts;
  opts.with_background = a.with_background;
  opts.keep_masks = !a.dump_masks.empty();
  const Modality modality = parse_modality(a.modality);
  const EncodedCorpus corpus = encode_corpus(data, ids, model, modality, opts);
  corpus.foreground.save(a.out);
  out << "wrote " << corpus.foreground.size() << " " << modality_name(modality) << " codes (q = "
      << corpus.foreground.bits() << ") to " << a.out.string() << '\n';
  if (!a.text_out.empty()) write_code_text(corpus.foreground, a.text_out);
  if (corpus.background) {
    fs::path bg = a.out;
    bg += ".background";
    corpus.background->save(bg);
    out << "wrote background codes to " << bg.string() << '\n';
  }
  if (opts.keep_masks) {
    std::ostringstream os;
    os << "id,alpha,H,W,bits\n";
    for (const auto& m : corpus.masks) os << format_mask_record(m) << '\n';
    write_text(a.dump_masks, os.str());
    out << "wrote " << corpus.masks.size() << " masks to " << a.dump_masks.string() << '\n';
  }
  return kExitOk;
}

int cmd_retrieve(const RetrieveArgs& a, std::ostream& out) {
  const CodeDatabase queries = CodeDatabase::load(a.queries);
  const CodeDatabase db = CodeDatabase::load(a.db);
  const auto index = queries.find(a.query_id);
  if (!index) throw ConfigError("query id " + std::to_string(a.query_id) + " is not in " + a.queries.string());
  const RetrievalResult r = hamming_rank(queries.code(*index), db, a.query_id);
  out << "rank\tid\tdistance\n";
  const std::size_t n = a.top == 0 ? r.ranking.size() : std::min(a.top, r.ranking.size());
  for (std::size_t k = 0; k < n; ++k) out << k + 1 << '\t' << r.ranking[k].id << '\t' << r.ranking[k].distance << '\n';
  return kExitOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const DirectionSpec dir = parse_direction(a.direction);
  const CodeDatabase queries = CodeDatabase::load(a.queries);
  const CodeDatabase db = CodeDatabase::load(a.db);
  if (queries.modality() != dir.query || db.modality() != dir.database) {
    throw ConfigError("direction " + dir.name + " needs " + std::string(modality_name(dir.query)) + " queries and a " +
                      std::string(modality_name(dir.database)) + " database, got " +
                      std::string(modality_name(queries.modality())) + " and " +
                      std::string(modality_name(db.modality())));
  }
  const PairedDataset data = load_dataset(a.data);
  const SimilarityMatrix s = build_similarity(data.labels);
  EvalOptions opts;
  opts.map_at = a.map_at;
  const EvalReport report = evaluate(queries, db, s, opts);
  const std::string summary = format_report_summary(report, dir.name, db.bits());
  out << summary;
  if (!a.out.empty()) {
    const std::string tag = a.tag.empty() ? a.direction : a.tag;
    write_text(a.out / (tag + ".summary.txt"), summary);
    write_text(a.out / (tag + ".rows.tsv"), format_report_rows(report, dir.name, db.bits()));
    write_text(a.out / (tag + ".pr.csv"), format_pr_csv(report));
    std::ostringstream ap;
    ap << "query\tap\n";
    for (std::size_t i = 0; i < report.ap.size(); ++i) {
      ap << report.query_ids[i] << '\t' << io::format_double(report.ap[i]) << '\n';
    }
    write_text(a.out / (tag + ".ap.tsv"), ap.str());
  }
  return kExitOk;
}

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  GradcheckSuiteOptions opts;
  opts.seed = a.seed;
  opts.tol = a.tol;
  opts.instances = a.instances;
  if (!a.inject_fault.empty()) {
    if (a.inject_fault != "tanh-sign") throw ConfigError("unknown fault '" + a.inject_fault + "'");
    opts.inject_tanh_sign_fault = true;
  }
  const GradcheckSuiteReport report = run_gradcheck_suite(opts);
  out << "op\tinstances\tmax_rel_err\tresult\n" << format_gradcheck_report(report);
  out << "tol " << io::format_double(report.tol) << ", " << std::fixed << std::setprecision(2) << report.seconds
      << std::defaultfloat << " s: " << (report.passed() ? "PASS" : "FAIL") << '\n';
  return report.passed() ? kExitOk : kExitNumeric;
}

int cmd_mask_stats(const MaskStatsArgs& a, std::ostream& out, std::ostream& err) {
  const PairedDataset data = load_dataset(a.data);
  const Model model = load_checkpoint(a.checkpoint);
  const IndexList ids = split_ids(data, a.split);
  if (!data.has_masks()) err << "warning: dataset has no planted masks; IoU omitted\n";
  const MaskStats stats = compute_mask_stats(data, ids, model);
  const std::string csv = format_mask_stats_csv(stats);
  if (a.out.empty()) {
    out << csv;
  } else {
    write_text(a.out, csv);
    out << "mean occupancy " << io::format_double(stats.mean_occupancy);
    if (stats.mean_iou) {
      out << ", mean IoU " << io::format_double(*stats.mean_iou) << ", random-rectangle baseline "
          << io::format_double(*stats.baseline_iou);
    }
    out << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attention-aware adversarial cross-modal hashing", "xmh"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic planted-foreground dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--n", gen.synth.n, "Number of instances");
  gen_cmd->add_option("--classes", gen.synth.classes, "Number of labels L");
  gen_cmd->add_option("--vocab", gen.synth.vocab, "Vocabulary size V");
  gen_cmd->add_option("--noise", gen.synth.noise, "Noise level in [0, 1]");
  gen_cmd->add_option("--seed", gen.synth.seed, "Random seed");
  gen_cmd->add_option("--image-size", gen.synth.image_size, "Image side in pixels");
  gen_cmd->add_option("--grid-size", gen.synth.grid_size, "Attention grid side in cells");
  gen_cmd->add_option("--channels", gen.synth.channels, "Image channels");
  gen_cmd->add_option("--test", gen.test, "Query (test) split size");
  gen_cmd->add_option("--train", gen.train, "Training split size");
  gen_cmd->add_flag("--force", gen.force, "Write into a non-empty directory");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--config", tr.config, "Training config (key = value)");
  train_cmd->add_option("--out", tr.out, "Run directory")->required();

  EncodeArgs enc;
  auto* encode_cmd = app.add_subcommand("encode", "Encode a split into a code database");
  encode_cmd->add_option("--data", enc.data, "Dataset directory")->required();
  encode_cmd->add_option("--checkpoint", enc.checkpoint, "Model checkpoint")->required();
  encode_cmd->add_option("--split", enc.split, "test, retrieval, train or all");
  encode_cmd->add_option("--modality", enc.modality, "image or text")->required();
  encode_cmd->add_option("--out", enc.out, "Code database path")->required();
  encode_cmd->add_option("--bits", enc.bits, "Expected code length q");
  encode_cmd->add_option("--dump-masks", enc.dump_masks, "Write learned masks as CSV");
  encode_cmd->add_option("--text-out", enc.text_out, "Also write codes as text");
  encode_cmd->add_flag("--with-background", enc.with_background, "Also write background codes (<out>.background)");

  RetrieveArgs ret;
  auto* retrieve_cmd = app.add_subcommand("retrieve", "Rank a database for one query");
  retrieve_cmd->add_option("--queries", ret.queries, "Query code database")->required();
  retrieve_cmd->add_option("--db", ret.db, "Database codes")->required();
  retrieve_cmd->add_option("--query-id", ret.query_id, "Query instance id")->required();
  retrieve_cmd->add_option("--top", ret.top, "Number of results (0: all)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "MAP and precision-recall for one direction");
  eval_cmd->add_option("--queries", ev.queries, "Query code database")->required();
  eval_cmd->add_option("--db", ev.db, "Database codes")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset directory (labels)")->required();
  eval_cmd->add_option("--direction", ev.direction, "t2i, i2t, i2i or t2t")->required();
  eval_cmd->add_option("--map-at", ev.map_at, "Rank cutoff (0: full ranking)");
  eval_cmd->add_option("--out", ev.out, "Directory for report files");
  eval_cmd->add_option("--tag", ev.tag, "File name prefix (default: direction)");

  GradcheckArgs gc;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gradcheck_cmd->add_option("--seed", gc.seed, "Random seed");
  gradcheck_cmd->add_option("--tol", gc.tol, "Relative error tolerance");
  gradcheck_cmd->add_option("--instances", gc.instances, "Random instances per op");
  gradcheck_cmd->add_option("--inject-fault", gc.inject_fault, "Mutation check: tanh-sign");

  MaskStatsArgs ms;
  auto* mask_cmd = app.add_subcommand("mask-stats", "Learned image mask occupancy and IoU");
  mask_cmd->add_option("--data", ms.data, "Dataset directory")->required();
  mask_cmd->add_option("--checkpoint", ms.checkpoint, "Model checkpoint")->required();
  mask_cmd->add_option("--split", ms.split, "test, retrieval, train or all");
  mask_cmd->add_option("--out", ms.out, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen, out);
    if (*train_cmd) return cmd_train(tr, out);
    if (*encode_cmd) return cmd_encode(enc, out);
    if (*retrieve_cmd) return cmd_retrieve(ret, out);
    if (*eval_cmd) return cmd_eval(ev, out);
    if (*gradcheck_cmd) return cmd_gradcheck(gc, out);
    if (*mask_cmd) return cmd_mask_stats(ms, out, err);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace xmh
