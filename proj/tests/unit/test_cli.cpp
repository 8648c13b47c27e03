#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "xmh/cli.hpp"
#include "xmh/retrieval.hpp"

using namespace xmh;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::initializer_list<std::string> args) {
  std::vector<std::string> owned{"xmh"};
  owned.insert(owned.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : owned) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// Shared small run: dataset, one-epoch model and encoded test/retrieval codes.
struct Workspace {
  fs::path root = fs::temp_directory_path() / "xmh_unit_cli";
  fs::path data = root / "data";
  fs::path run = root / "run";
  fs::path ckpt = run / "model.ckpt";

  Workspace() {
    fs::remove_all(root);
    fs::create_directories(root);
    REQUIRE(cli({"gen-data", "--out", data.string(), "--n", "120", "--vocab", "32", "--test", "20", "--train", "64"})
                .code == kExitOk);
    std::ofstream(root / "cfg.txt") << "epochs = 1\nbatch_size = 16\nfeatures = 6\ntext_hidden = 12\n"
                                       "text_features = 8\nhash_hidden = 16\nq = 8\n";
    const Run t = cli({"train", "--data", data.string(), "--config", (root / "cfg.txt").string(), "--out",
                       run.string()});
    REQUIRE(t.code == kExitOk);
    REQUIRE(t.out.find("epoch 1") != std::string::npos);
  }

  fs::path codes(const std::string& split, const std::string& modality) const {
    return root / (split + "_" + modality + ".codes");
  }
};

Workspace& workspace() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("cli exit codes") {
  const fs::path out = fs::temp_directory_path() / "xmh_unit_cli_codes";
  fs::remove_all(out);
  CHECK(cli({}).code == kExitValidation);
  CHECK(cli({"no-such-command"}).code == kExitValidation);
  CHECK(cli({"gen-data", "--out", out.string(), "--classes", "1"}).code == kExitValidation);
  CHECK(cli({"gen-data", "--out", out.string(), "--n", "abc"}).code == kExitValidation);
  CHECK(cli({"train", "--data", (out / "missing").string(), "--out", (out / "run").string()}).code == kExitIo);
  CHECK(cli({"retrieve", "--queries", (out / "nope").string(), "--db", (out / "nope").string(), "--query-id", "0"})
            .code == kExitIo);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("gen-data is deterministic and refuses to overwrite") {
  const fs::path a = fs::temp_directory_path() / "xmh_unit_cli_gen_a";
  const fs::path b = fs::temp_directory_path() / "xmh_unit_cli_gen_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const std::initializer_list<std::string> common{"--n", "60", "--test", "10", "--train", "20", "--seed", "4"};
  std::vector<std::string> args_a{"gen-data", "--out", a.string()}, args_b{"gen-data", "--out", b.string()};
  args_a.insert(args_a.end(), common);
  args_b.insert(args_b.end(), common);
  auto run_vec = [](const std::vector<std::string>& v) {
    std::vector<const char*> argv{"xmh"};
    for (const auto& s : v) argv.push_back(s.c_str());
    std::ostringstream out, err;
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  };
  REQUIRE(run_vec(args_a) == kExitOk);
  REQUIRE(run_vec(args_b) == kExitOk);
  for (const auto& entry : fs::directory_iterator(a)) {
    CHECK(slurp(entry.path()) == slurp(b / entry.path().filename()));
  }
  CHECK(run_vec(args_a) == kExitValidation);
  args_a.push_back("--force");
  CHECK(run_vec(args_a) == kExitOk);
}

TEST_CASE("train writes a log, config and one final checkpoint") {
  Workspace& w = workspace();
  CHECK(fs::exists(w.ckpt));
  CHECK(fs::exists(w.run / "config.txt"));
  std::ifstream log(w.run / "log.tsv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(log, line)) {
    if (!line.empty() && line[0] != '#') ++lines;
  }
  CHECK(lines == 4);
  std::size_t ckpts = 0;
  for (const auto& entry : fs::directory_iterator(w.run)) ckpts += entry.path().extension() == ".ckpt";
  CHECK(ckpts == 1);
}

TEST_CASE("encode, retrieve and eval") {
  Workspace& w = workspace();
  const fs::path masks = w.root / "masks.csv";
  for (const std::string m : {"image", "text"}) {
    for (const std::string s : {"test", "retrieval"}) {
      const Run r = cli({"encode", "--data", w.data.string(), "--checkpoint", w.ckpt.string(), "--split", s,
                         "--modality", m, "--out", w.codes(s, m).string(), "--with-background", "--bits", "8"});
      REQUIRE(r.code == kExitOk);
      CHECK(fs::exists(w.codes(s, m).string() + ".background"));
    }
  }
  const CodeDatabase q = CodeDatabase::load(w.codes("test", "text"));
  CHECK(q.size() == 20);
  CHECK(q.bits() == 8);
  CHECK(q.modality() == Modality::Text);

  CHECK(cli({"encode", "--data", w.data.string(), "--checkpoint", w.ckpt.string(), "--modality", "image", "--out",
             (w.root / "x.codes").string(), "--bits", "16"})
            .code == kExitValidation);
  const Run dump = cli({"encode", "--data", w.data.string(), "--checkpoint", w.ckpt.string(), "--modality", "image",
                        "--out", (w.root / "y.codes").string(), "--dump-masks", masks.string()});
  REQUIRE(dump.code == kExitOk);
  CHECK(slurp(masks).rfind("id,alpha,H,W,bits", 0) == 0);

  const Run ret = cli({"retrieve", "--queries", w.codes("test", "text").string(), "--db",
                       w.codes("retrieval", "image").string(), "--query-id", std::to_string(q.ids().front()),
                       "--top", "5"});
  CHECK(ret.code == kExitOk);
  CHECK(cli({"retrieve", "--queries", w.codes("test", "text").string(), "--db", w.codes("retrieval", "image").string(),
             "--query-id", "999999"})
            .code != kExitOk);

  const fs::path reports = w.root / "reports";
  const Run full = cli({"eval", "--queries", w.codes("test", "text").string(), "--db",
                        w.codes("retrieval", "image").string(), "--data", w.data.string(), "--direction", "t2i",
                        "--out", reports.string()});
  REQUIRE(full.code == kExitOk);
  CHECK(full.out.find("MAP: ") != std::string::npos);
  CHECK(fs::exists(reports / "t2i.summary.txt"));
  CHECK(fs::exists(reports / "t2i.pr.csv"));
  const Run top = cli({"eval", "--queries", w.codes("test", "text").string(), "--db",
                       w.codes("retrieval", "image").string(), "--data", w.data.string(), "--direction", "t2i",
                       "--map-at", "5", "--out", reports.string(), "--tag", "at5"});
  REQUIRE(top.code == kExitOk);
  CHECK(slurp(reports / "at5.rows.tsv").find("map@5") != std::string::npos);

  CHECK(cli({"eval", "--queries", w.codes("test", "image").string(), "--db", w.codes("retrieval", "image").string(),
             "--data", w.data.string(), "--direction", "t2i"})
            .code == kExitValidation);
}

TEST_CASE("mask-stats reports IoU against planted masks") {
  Workspace& w = workspace();
  const Run r = cli({"mask-stats", "--data", w.data.string(), "--checkpoint", w.ckpt.string(), "--out",
                     (w.root / "mask_stats.csv").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("mean IoU") != std::string::npos);
  CHECK(r.out.find("random-rectangle baseline") != std::string::npos);
}

TEST_CASE("gradcheck subcommand catches an injected fault") {
  const Run ok = cli({"gradcheck", "--instances", "3"});
  CHECK(ok.code == kExitOk);
  const Run bad = cli({"gradcheck", "--instances", "3", "--inject-fault", "tanh-sign"});
  CHECK(bad.code == kExitNumeric);
  CHECK(bad.out.find("FAIL") != std::string::npos);
  CHECK(cli({"gradcheck", "--inject-fault", "other"}).code == kExitValidation);
}
