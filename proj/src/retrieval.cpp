#include "xmh/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "xmh/errors.hpp"
#include "xmh/parallel.hpp"

namespace xmh {

namespace fs = std::filesystem;

std::string_view modality_name(Modality m) { return m == Modality::Image ? "image" : "text"; }

Modality parse_modality(std::string_view name) {
  if (name == "image") return Modality::Image;
  if (name == "text") return Modality::Text;
  throw ConfigError("unknown modality '" + std::string(name) + "' (expected image or text)");
}

std::vector<std::uint64_t> pack_bits(const BinaryCode& code) {
  std::vector<std::uint64_t> words((code.size() + 63) / 64, 0);
  for (std::size_t i = 0; i < code.size(); ++i) {
    if (code.bits[i] > 0) words[i / 64] |= std::uint64_t{1} << (i % 64);
  }
  return words;
}

std::uint32_t hamming_distance(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  std::uint32_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += static_cast<std::uint32_t>(std::popcount(a[i] ^ b[i]));
  return d;
}

// ---------------------------------------------------------------------------
// CodeDatabase

CodeDatabase::CodeDatabase(Modality modality, std::size_t bits)
    : modality_(modality), bits_(bits), words_((bits + 63) / 64) {
  if (bits == 0) throw ConfigError("code length must be positive");
}

void CodeDatabase::add(std::uint64_t id, const BinaryCode& code) {
  if (code.size() != bits_) {
    throw DimensionError("code of " + std::to_string(code.size()) + " bits added to a " + std::to_string(bits_) +
                         "-bit database");
  }
  if (!index_.emplace(id, ids_.size()).second) throw ConfigError("duplicate id " + std::to_string(id));
  ids_.push_back(id);
  const auto packed = pack_bits(code);
  words_data_.insert(words_data_.end(), packed.begin(), packed.end());
}

std::span<const std::uint64_t> CodeDatabase::code_words(std::size_t i) const {
  return std::span<const std::uint64_t>(words_data_).subspan(i * words_, words_);
}

BinaryCode CodeDatabase::code(std::size_t i) const {
  BinaryCode c;
  c.bits.resize(bits_);
  const auto w = code_words(i);
  for (std::size_t b = 0; b < bits_; ++b) c.bits[b] = (w[b / 64] >> (b % 64)) & 1u ? 1 : -1;
  return c;
}

std::optional<std::size_t> CodeDatabase::find(std::uint64_t id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void CodeDatabase::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_atomically(path, [&](std::ostream& os) {
    os << "XMHCODES 1 modality=" << modality_name(modality_) << " q=" << bits_ << " count=" << ids_.size() << '\n';
    io::write_le(os, std::span<const std::uint64_t>(words_data_));
    io::write_le(os, std::span<const std::uint64_t>(ids_));
  });
}

CodeDatabase CodeDatabase::load(const fs::path& path) {
  auto is = io::open_input(path, true);
  std::string header;
  if (!std::getline(is, header)) throw FormatError(path.string() + ": empty code database");
  std::istringstream hs(header);
  std::string magic, mod, q, count;
  int version = 0;
  hs >> magic >> version >> mod >> q >> count;
  if (magic != "XMHCODES") throw FormatError(path.string() + " is not a code database");
  if (version != 1) throw VersionError("code database version " + std::to_string(version) + " is not supported");
  auto value = [&](const std::string& token, const std::string& key) {
    if (token.rfind(key + "=", 0) != 0) throw FormatError(path.string() + ": expected field '" + key + "'");
    return token.substr(key.size() + 1);
  };
  const Modality modality = parse_modality(value(mod, "modality"));
  const std::size_t bits = std::stoul(value(q, "q"));
  const std::size_t n = std::stoul(value(count, "count"));
  CodeDatabase db(modality, bits);
  std::vector<std::uint64_t> words(n * db.words_), ids(n);
  io::read_le(is, std::span<std::uint64_t>(words), path.string());
  io::read_le(is, std::span<std::uint64_t>(ids), path.string());
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes");
  db.words_data_ = std::move(words);
  db.ids_ = std::move(ids);
  for (std::size_t i = 0; i < db.ids_.size(); ++i) {
    if (!db.index_.emplace(db.ids_[i], i).second) throw FormatError(path.string() + ": duplicate id");
  }
  return db;
}

void write_code_text(const CodeDatabase& db, const fs::path& path) {
  io::write_atomically(path, [&](std::ostream& os) {
    for (std::size_t i = 0; i < db.size(); ++i) {
      os << db.id(i) << '\t' << db.bits() << '\t' << to_bit_string(db.code(i)) << '\n';
    }
  });
}

// ---------------------------------------------------------------------------
// Ranking and metrics

RetrievalResult hamming_rank(const BinaryCode& query, const CodeDatabase& db, std::uint64_t query_id) {
  if (query.size() != db.bits()) {
    throw DimensionError("query has " + std::to_string(query.size()) + " bits but database codes have " +
                         std::to_string(db.bits()));
  }
  const auto packed = pack_bits(query);
  RetrievalResult r;
  r.query_id = query_id;
  r.ranking.reserve(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) r.ranking.push_back({db.id(i), hamming_distance(packed, db.code_words(i))});
  std::sort(r.ranking.begin(), r.ranking.end(), [](const RankedItem& a, const RankedItem& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  });
  return r;
}

double average_precision(std::span<const std::uint8_t> relevant, std::size_t cutoff) {
  const std::size_t n = cutoff == 0 ? relevant.size() : std::min(cutoff, relevant.size());
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (relevant[r]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return hits == 0 ? 0.0 : sum / static_cast<double>(hits);
}

std::vector<double> recall_grid(std::size_t points) {
  if (points < 2) throw ConfigError("a recall grid needs at least 2 points");
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) grid[i] = static_cast<double>(i) / static_cast<double>(points - 1);
  return grid;
}

std::vector<PrPoint> pr_curve(std::span<const std::uint8_t> relevant, std::span<const double> grid) {
  std::vector<PrPoint> out;
  out.reserve(grid.size());
  const std::size_t total = static_cast<std::size_t>(std::count_if(relevant.begin(), relevant.end(),
                                                                   [](std::uint8_t v) { return v != 0; }));
  if (total == 0) {
    for (double r : grid) out.push_back({r, 0.0});
    return out;
  }
  const std::size_t n = relevant.size();
  std::vector<double> recall(n), best_after(n);
  std::size_t hits = 0;
  for (std::size_t k = 0; k < n; ++k) {
    hits += relevant[k] ? 1 : 0;
    recall[k] = static_cast<double>(hits) / static_cast<double>(total);
    best_after[k] = static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  for (std::size_t k = n - 1; k-- > 0;) best_after[k] = std::max(best_after[k], best_after[k + 1]);
  for (double r : grid) {
    // recall is non-decreasing in k; find the first cutoff reaching r.
    const auto it = std::lower_bound(recall.begin(), recall.end(), r - 1e-12);
    const double precision = it == recall.end() ? 0.0 : best_after[static_cast<std::size_t>(it - recall.begin())];
    out.push_back({r, precision});
  }
  return out;
}

std::vector<PrPoint> pr_curve(std::span<const std::vector<std::uint8_t>> rankings, std::span<const double> grid) {
  std::vector<PrPoint> mean;
  for (double r : grid) mean.push_back({r, 0.0});
  if (rankings.empty()) return mean;
  for (const auto& ranking : rankings) {
    const auto curve = pr_curve(std::span<const std::uint8_t>(ranking), grid);
    for (std::size_t i = 0; i < grid.size(); ++i) mean[i].precision += curve[i].precision;
  }
  for (auto& p : mean) p.precision /= static_cast<double>(rankings.size());
  return mean;
}

EvalReport evaluate(const CodeDatabase& queries, const CodeDatabase& db, const SimilarityMatrix& similarity,
                    const EvalOptions& options) {
  if (queries.bits() != db.bits()) {
    throw DimensionError("query codes have " + std::to_string(queries.bits()) + " bits, database " +
                         std::to_string(db.bits()));
  }
  auto covered = [&](const CodeDatabase& c) {
    return std::all_of(c.ids().begin(), c.ids().end(), [&](std::uint64_t id) { return id < similarity.size(); });
  };
  if (!covered(queries) || !covered(db)) throw Error("ground truth does not cover every query and database id");

  const std::size_t nq = queries.size();
  std::vector<double> ap(nq);
  std::vector<std::vector<PrPoint>> curves(nq);
  parallel_for(nq, [&](std::size_t i) {
    const RetrievalResult r = hamming_rank(queries.code(i), db, queries.id(i));
    std::vector<std::uint8_t> relevant(r.ranking.size());
    for (std::size_t k = 0; k < r.ranking.size(); ++k) relevant[k] = similarity(queries.id(i), r.ranking[k].id) ? 1 : 0;
    ap[i] = average_precision(relevant, options.map_at);
    curves[i] = pr_curve(std::span<const std::uint8_t>(relevant), options.recall_grid);
  });

  EvalReport report;
  report.map_at = options.map_at;
  report.query_ids = queries.ids();
  report.ap = ap;
  for (double v : ap) report.map += v;
  if (nq) report.map /= static_cast<double>(nq);
  for (double r : options.recall_grid) report.pr.push_back({r, 0.0});
  for (const auto& c : curves) {
    for (std::size_t g = 0; g < c.size(); ++g) report.pr[g].precision += c[g].precision;
  }
  if (nq) {
    for (auto& p : report.pr) p.precision /= static_cast<double>(nq);
  }
  return report;
}

std::string format_report_summary(const EvalReport& report, std::string_view direction, std::size_t bits) {
  std::ostringstream os;
  os << "direction: " << direction << '\n'
     << "bits: " << bits << '\n'
     << "queries: " << report.ap.size() << '\n'
     << "cutoff: " << (report.map_at == 0 ? std::string("full") : std::to_string(report.map_at)) << '\n'
     << "MAP: " << io::format_double(report.map) << '\n'
     << "precision at recall:\n";
  for (const auto& p : report.pr) {
    os << "  " << io::format_double(p.recall) << "\t" << io::format_double(p.precision) << '\n';
  }
  return os.str();
}

std::string format_report_rows(const EvalReport& report, std::string_view direction, std::size_t bits) {
  std::ostringstream os;
  const std::string metric = report.map_at == 0 ? "map" : "map@" + std::to_string(report.map_at);
  os << metric << '\t' << direction << '\t' << bits << '\t' << io::format_double(report.map) << '\n';
  return os.str();
}

std::string format_pr_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "recall,precision\n";
  for (const auto& p : report.pr) os << io::format_double(p.recall) << ',' << io::format_double(p.precision) << '\n';
  return os.str();
}

std::string format_mask_record(const MaskRecord& record) {
  std::ostringstream os;
  os << record.id << ',' << io::format_double(record.alpha) << ',' << record.height << ',' << record.width << ',';
  for (auto b : record.bits) os << (b ? '1' : '0');
  return os.str();
}

// ---------------------------------------------------------------------------
// Corpus encoding

namespace {

struct BatchOutput {
  std::vector<BinaryCode> foreground;
  std::vector<BinaryCode> background;
  std::vector<MaskRecord> masks;
  std::vector<double> relaxed;
};

}  // namespace

EncodedCorpus encode_corpus(const PairedDataset& data, std::span<const std::uint32_t> ids, const Model& model,
                            Modality modality, const EncodeOptions& options) {
  const auto& mc = model.config;
  if (!(mc.image == data.image) || mc.grid_height() != data.grid_height || mc.grid_width() != data.grid_width) {
    throw ConfigError("checkpoint image geometry does not match the dataset");
  }
  if (mc.vocab != data.vocab) {
    throw ConfigError("checkpoint vocabulary (" + std::to_string(mc.vocab) + ") does not match the dataset (" +
                      std::to_string(data.vocab) + ")");
  }
  for (auto id : ids) {
    if (id >= data.size()) throw ConfigError("instance id " + std::to_string(id) + " is outside the dataset");
  }
  const std::size_t bits = mc.bits;
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  const std::size_t nbatches = (ids.size() + batch - 1) / batch;
  std::vector<BatchOutput> outputs(nbatches);

  ForwardOptions fo;
  fo.with_background = options.with_background;
  parallel_for(nbatches, [&](std::size_t b) {
    const auto chunk = ids.subspan(b * batch, std::min(batch, ids.size() - b * batch));
    const ForwardState s = modality == Modality::Image ? forward_image(model, data.image_batch(chunk), fo)
                                                       : forward_text(model, data.bow_batch(chunk), fo);
    const Tensor& fg = modality == Modality::Image ? s.codes.image : s.codes.text;
    const Tensor& bg = modality == Modality::Image ? s.codes.image_background : s.codes.text_background;
    const AttentionMask& mask = modality == Modality::Image ? s.image_attention.mask : s.text_attention.mask;
    auto& out = outputs[b];
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      out.foreground.push_back(binarize(fg.row(i)));
      if (options.with_background) out.background.push_back(binarize(bg.row(i)));
      if (options.keep_relaxed) out.relaxed.insert(out.relaxed.end(), fg.row(i).begin(), fg.row(i).end());
      if (options.keep_masks) {
        MaskRecord rec;
        rec.id = chunk[i];
        rec.alpha = mask.alpha;
        rec.height = modality == Modality::Image ? mc.grid_height() : 1;
        rec.width = modality == Modality::Image ? mc.grid_width() : mc.text_features;
        for (double z : mask.binary.row(i)) rec.bits.push_back(z != 0.0 ? 1 : 0);
        out.masks.push_back(std::move(rec));
      }
    }
  });

  EncodedCorpus corpus{CodeDatabase(modality, bits), std::nullopt, {}, Tensor()};
  if (options.with_background) corpus.background = CodeDatabase(modality, bits);
  std::vector<double> relaxed;
  std::size_t k = 0;
  for (auto& out : outputs) {
    for (std::size_t i = 0; i < out.foreground.size(); ++i, ++k) {
      corpus.foreground.add(ids[k], out.foreground[i]);
      if (corpus.background) corpus.background->add(ids[k], out.background[i]);
    }
    for (auto& m : out.masks) corpus.masks.push_back(std::move(m));
    relaxed.insert(relaxed.end(), out.relaxed.begin(), out.relaxed.end());
  }
  if (options.keep_relaxed) corpus.relaxed = Tensor({ids.size(), bits}, std::move(relaxed));
  return corpus;
}

}  // namespace xmh
