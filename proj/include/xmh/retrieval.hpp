#pragma once

// Test-time encoding (foreground codes), packed Hamming ranking, and MAP /
// precision-recall evaluation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "xmh/data.hpp"
#include "xmh/hashcoder.hpp"
#include "xmh/model.hpp"

namespace xmh {

enum class Modality : std::uint8_t { Image, Text };

std::string_view modality_name(Modality m);
Modality parse_modality(std::string_view name);

/// Packs +1 bits as set bits, 64 per word, little bit order.
std::vector<std::uint64_t> pack_bits(const BinaryCode& code);
std::uint32_t hamming_distance(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b);

class CodeDatabase {
 public:
  CodeDatabase() = default;
  CodeDatabase(Modality modality, std::size_t bits);

  /// Throws DimensionError on a length mismatch and ConfigError on a
  /// duplicate id.
  void add(std::uint64_t id, const BinaryCode& code);

  Modality modality() const { return modality_; }
  std::size_t bits() const { return bits_; }
  std::size_t words_per_code() const { return words_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  std::uint64_t id(std::size_t i) const { return ids_.at(i); }
  const std::vector<std::uint64_t>& ids() const { return ids_; }
  std::span<const std::uint64_t> code_words(std::size_t i) const;
  BinaryCode code(std::size_t i) const;
  std::optional<std::size_t> find(std::uint64_t id) const;

  /// Header line `XMHCODES 1 modality=<m> q=<q> count=<n>`, then the packed
  /// words and the id table as little-endian uint64.
  void save(const std::filesystem::path& path) const;
  static CodeDatabase load(const std::filesystem::path& path);

  friend bool operator==(const CodeDatabase& a, const CodeDatabase& b) {
    return a.modality_ == b.modality_ && a.bits_ == b.bits_ && a.ids_ == b.ids_ && a.words_data_ == b.words_data_;
  }

 private:
  Modality modality_ = Modality::Image;
  std::size_t bits_ = 0;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> ids_;
  std::vector<std::uint64_t> words_data_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

/// One record per line: id, q, bits as a 0/1 string (tab-separated).
void write_code_text(const CodeDatabase& db, const std::filesystem::path& path);

struct RankedItem {
  std::uint64_t id;
  std::uint32_t distance;

  friend bool operator==(const RankedItem&, const RankedItem&) = default;
};

enum class TiePolicy : std::uint8_t { AscendingId };

struct RetrievalResult {
  std::uint64_t query_id = 0;
  std::vector<RankedItem> ranking;
  TiePolicy ties = TiePolicy::AscendingId;
};

/// Full ranking of db by Hamming distance to the query; ties by ascending id.
RetrievalResult hamming_rank(const BinaryCode& query, const CodeDatabase& db, std::uint64_t query_id = 0);

/// AP = (1/R) * sum over relevant ranks r of precision@r. With cutoff > 0
/// only the first `cutoff` ranks count and R is the number of relevant items
/// among them. Returns 0 when there is nothing relevant.
double average_precision(std::span<const std::uint8_t> relevant, std::size_t cutoff = 0);

struct PrPoint {
  double recall;
  double precision;

  friend bool operator==(const PrPoint&, const PrPoint&) = default;
};

/// Evenly spaced recall levels 0, 1/(points-1), ..., 1.
std::vector<double> recall_grid(std::size_t points = 11);

/// Interpolated precision (max precision over cutoffs with recall >= r) for
/// one ranking. Rankings with no relevant item get precision 0 everywhere.
std::vector<PrPoint> pr_curve(std::span<const std::uint8_t> relevant, std::span<const double> grid);
/// Mean of the per-query curves.
std::vector<PrPoint> pr_curve(std::span<const std::vector<std::uint8_t>> rankings, std::span<const double> grid);

struct EvalOptions {
  std::size_t map_at = 0;  // 0: full ranking
  std::vector<double> recall_grid = xmh::recall_grid();
};

struct EvalReport {
  double map = 0.0;
  std::vector<PrPoint> pr;
  std::vector<std::uint64_t> query_ids;
  std::vector<double> ap;
  std::size_t map_at = 0;
};

/// Ranks db for every query code; relevance of (query, item) is S = 1 over
/// the ids. Throws Error when S does not cover the ids.
EvalReport evaluate(const CodeDatabase& queries, const CodeDatabase& db, const SimilarityMatrix& similarity,
                    const EvalOptions& options = {});

/// Summary text, `metric<TAB>direction<TAB>q<TAB>value` rows, and the PR curve
/// as `recall,precision` CSV.
std::string format_report_summary(const EvalReport& report, std::string_view direction, std::size_t bits);
std::string format_report_rows(const EvalReport& report, std::string_view direction, std::size_t bits);
std::string format_pr_csv(const EvalReport& report);

struct MaskRecord {
  std::uint64_t id = 0;
  double alpha = 0.0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;
};

/// `id,alpha,H,W,bits` with bits as a row-major 0/1 string.
std::string format_mask_record(const MaskRecord& record);

struct EncodeOptions {
  bool with_background = false;
  bool keep_masks = false;
  bool keep_relaxed = false;
  std::size_t batch_size = 128;
};

struct EncodedCorpus {
  CodeDatabase foreground;
  std::optional<CodeDatabase> background;
  std::vector<MaskRecord> masks;
  Tensor relaxed;  // [N, q] foreground relaxed codes when requested
};

/// Encode -> mask -> split -> hash(foreground) -> binarize for each instance.
/// Background codes are produced only on request. Throws ConfigError when
/// the model does not fit the dataset.
EncodedCorpus encode_corpus(const PairedDataset& data, std::span<const std::uint32_t> ids, const Model& model,
                            Modality modality, const EncodeOptions& options = {});

}  // namespace xmh
