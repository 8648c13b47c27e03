#include "xmh/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "xmh/errors.hpp"

namespace xmh {

namespace fs = std::filesystem;

void SyntheticConfig::validate() const {
  if (n == 0) throw ConfigError("n must be positive");
  if (classes < 2) throw ConfigError("at least 2 classes are required, got " + std::to_string(classes));
  if (image_size == 0 || grid_size == 0 || image_size % grid_size != 0) {
    throw ConfigError("grid size " + std::to_string(grid_size) + " must divide image size " +
                      std::to_string(image_size));
  }
  if (channels == 0) throw ConfigError("channels must be positive");
  const std::size_t patch = image_size / grid_size;
  if (patch * patch * channels < 3) throw ConfigError("each grid cell needs at least 3 pixel values");
  if (vocab < classes) throw ConfigError("vocabulary must have at least one word per class");
  if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("noise level must lie in [0, 1]");
}

std::span<const float> PairedDataset::image_at(std::size_t i) const {
  return std::span<const float>(images).subspan(i * image_values(), image_values());
}

std::span<const float> PairedDataset::bow_at(std::size_t i) const {
  return std::span<const float>(bow).subspan(i * vocab, vocab);
}

std::span<const std::uint8_t> PairedDataset::mask_at(std::size_t i) const {
  if (!has_masks()) return {};
  return std::span<const std::uint8_t>(masks).subspan(i * grid_cells(), grid_cells());
}

Tensor PairedDataset::image_batch(std::span<const std::uint32_t> ids) const {
  Tensor out({ids.size(), image.height, image.width, image.channels});
  auto dst = out.data();
  std::size_t k = 0;
  for (auto id : ids) {
    for (float v : image_at(id)) dst[k++] = v;
  }
  return out;
}

Tensor PairedDataset::bow_batch(std::span<const std::uint32_t> ids) const {
  Tensor out({ids.size(), vocab});
  auto dst = out.data();
  std::size_t k = 0;
  for (auto id : ids) {
    for (float v : bow_at(id)) dst[k++] = v;
  }
  return out;
}

void PairedDataset::validate() const {
  const std::size_t n = size();
  if (images.size() != n * image_values()) throw FormatError("image array length does not match n");
  if (bow.size() != n * vocab) throw FormatError("bag-of-words array length does not match n");
  if (!masks.empty() && masks.size() != n * grid_cells()) throw FormatError("mask array length does not match n");
  for (const auto& set : labels) {
    for (auto l : set) {
      if (l >= classes) throw FormatError("label " + std::to_string(l) + " out of range");
    }
  }
  auto check = [n](const IndexList& ids, const char* name) {
    for (auto id : ids) {
      if (id >= n) throw FormatError(std::string("split ") + name + " references instance " + std::to_string(id));
    }
  };
  check(splits.test, "test");
  check(splits.retrieval, "retrieval");
  check(splits.train, "train");
}

namespace {

struct RectShape {
  std::size_t height;
  std::size_t width;
};

std::vector<RectShape> admissible_rectangles(std::size_t gh, std::size_t gw) {
  const std::size_t cells = gh * gw;
  std::vector<RectShape> shapes;
  for (std::size_t h = 1; h <= gh; ++h) {
    for (std::size_t w = 1; w <= gw; ++w) {
      // 25% <= area <= 50%, in integer arithmetic.
      if (4 * h * w >= cells && 2 * h * w <= cells) shapes.push_back({h, w});
    }
  }
  return shapes;
}

void draw_rectangle(const std::vector<RectShape>& shapes, std::size_t gh, std::size_t gw, Rng& rng,
                    std::span<std::uint8_t> mask) {
  const RectShape rect = shapes[rng.below(shapes.size())];
  const std::size_t top = rng.below(gh - rect.height + 1);
  const std::size_t left = rng.below(gw - rect.width + 1);
  std::fill(mask.begin(), mask.end(), 0);
  for (std::size_t y = top; y < top + rect.height; ++y) {
    for (std::size_t x = left; x < left + rect.width; ++x) mask[y * gw + x] = 1;
  }
}

}  // namespace

std::vector<std::uint8_t> random_rectangle_mask(std::size_t grid_height, std::size_t grid_width, Rng& rng) {
  const auto shapes = admissible_rectangles(grid_height, grid_width);
  if (shapes.empty()) throw ConfigError("grid too small for a 25%-50% foreground rectangle");
  std::vector<std::uint8_t> mask(grid_height * grid_width);
  draw_rectangle(shapes, grid_height, grid_width, rng, mask);
  return mask;
}

PairedDataset generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  Rng rng(config.seed);

  PairedDataset data;
  data.image = {config.image_size, config.image_size, config.channels};
  data.grid_height = config.grid_size;
  data.grid_width = config.grid_size;
  data.vocab = config.vocab;
  data.classes = config.classes;
  data.seed = config.seed;
  data.noise = config.noise;

  const std::size_t patch = config.image_size / config.grid_size;
  const std::size_t cell_values = patch * patch * config.channels;
  const auto shapes = admissible_rectangles(config.grid_size, config.grid_size);
  if (shapes.empty()) throw ConfigError("grid too small for a 25%-50% foreground rectangle");

  // Positions 0 and 1 of every foreground cell form a shared marker (on, off);
  // each class switches on two of the remaining positions.
  std::vector<std::size_t> free_slots(cell_values - 2);
  std::iota(free_slots.begin(), free_slots.end(), 2);
  rng.shuffle(std::span<std::size_t>(free_slots));
  std::vector<std::vector<std::uint8_t>> patterns(config.classes, std::vector<std::uint8_t>(cell_values, 0));
  for (std::size_t c = 0; c < config.classes; ++c) {
    patterns[c][0] = 1;
    patterns[c][free_slots[(2 * c) % free_slots.size()]] = 1;
    patterns[c][free_slots[(2 * c + 1) % free_slots.size()]] = 1;
  }

  const std::size_t block = std::max<std::size_t>(1, config.vocab / (2 * config.classes));
  const std::size_t n = config.n;
  const std::size_t cells = config.grid_size * config.grid_size;
  data.images.assign(n * data.image_values(), 0.0f);
  data.bow.assign(n * config.vocab, 0.0f);
  data.masks.assign(n * cells, 0);
  data.labels.resize(n);

  std::vector<std::uint32_t> order(config.classes);
  std::vector<std::uint8_t> cell_pattern(cell_values);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t count = 1 + rng.below(std::min<std::size_t>(3, config.classes));
    std::iota(order.begin(), order.end(), 0u);
    rng.shuffle(std::span<std::uint32_t>(order));
    LabelSet labels(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(labels.begin(), labels.end());

    std::fill(cell_pattern.begin(), cell_pattern.end(), 0);
    for (auto l : labels) {
      for (std::size_t k = 0; k < cell_values; ++k) cell_pattern[k] |= patterns[l][k];
    }

    auto mask = std::span<std::uint8_t>(data.masks).subspan(i * cells, cells);
    draw_rectangle(shapes, config.grid_size, config.grid_size, rng, mask);

    auto pixels = std::span<float>(data.images).subspan(i * data.image_values(), data.image_values());
    for (std::size_t gy = 0; gy < config.grid_size; ++gy) {
      for (std::size_t gx = 0; gx < config.grid_size; ++gx) {
        const bool fg = mask[gy * config.grid_size + gx] != 0;
        std::size_t k = 0;
        for (std::size_t py = 0; py < patch; ++py) {
          for (std::size_t px = 0; px < patch; ++px) {
            const std::size_t y = gy * patch + py, x = gx * patch + px;
            for (std::size_t c = 0; c < config.channels; ++c, ++k) {
              double v;
              if (fg) {
                const double jitter = 0.2 * config.noise * rng.uniform();
                v = cell_pattern[k] ? 1.0 - jitter : jitter;
              } else {
                v = 0.5 + config.noise * (rng.uniform() - 0.5);
              }
              pixels[(y * config.image_size + x) * config.channels + c] = static_cast<float>(v);
            }
          }
        }
      }
    }

    auto words = std::span<float>(data.bow).subspan(i * config.vocab, config.vocab);
    const double keep = 1.0 - 0.5 * config.noise;
    for (auto l : labels) {
      const std::size_t start = (l * block) % config.vocab;
      for (std::size_t w = 0; w < block; ++w) {
        const bool core = w == 0;
        if (core || rng.bernoulli(keep)) words[(start + w) % config.vocab] += 1.0f;
      }
    }
    const auto noise_words = rng.poisson(8.0 * config.noise);
    for (std::uint64_t k = 0; k < noise_words; ++k) words[rng.below(config.vocab)] += 1.0f;

    data.labels[i] = std::move(labels);
  }
  return data;
}

SimilarityMatrix::SimilarityMatrix(std::vector<IndexList> positives) : positives_(std::move(positives)) {
  for (auto& row : positives_) std::sort(row.begin(), row.end());
}

bool SimilarityMatrix::operator()(std::size_t i, std::size_t j) const {
  const auto& row = positives_.at(i);
  return std::binary_search(row.begin(), row.end(), static_cast<std::uint32_t>(j));
}

SimilarityMatrix build_similarity(std::span<const LabelSet> labels) {
  const std::size_t n = labels.size();
  std::uint32_t max_label = 0;
  for (const auto& set : labels) {
    for (auto l : set) max_label = std::max(max_label, l);
  }
  const std::size_t words = max_label / 64 + 1;
  std::vector<std::uint64_t> bits(n * words, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto l : labels[i]) bits[i * words + l / 64] |= std::uint64_t{1} << (l % 64);
  }
  std::vector<IndexList> positives(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      bool shared = i == j;
      for (std::size_t w = 0; w < words && !shared; ++w) shared = (bits[i * words + w] & bits[j * words + w]) != 0;
      if (shared) positives[i].push_back(static_cast<std::uint32_t>(j));
    }
  }
  return SimilarityMatrix(std::move(positives));
}

Splits make_splits(std::size_t n, std::size_t n_test, std::size_t n_train, std::uint64_t seed) {
  if (n_test + 1 > n) {
    throw ConfigError("test split of " + std::to_string(n_test) + " leaves no retrieval set out of " +
                      std::to_string(n));
  }
  if (n_train > n - n_test) {
    throw ConfigError("train split of " + std::to_string(n_train) + " exceeds the retrieval set of " +
                      std::to_string(n - n_test));
  }
  Rng rng(seed);
  IndexList all(n);
  std::iota(all.begin(), all.end(), 0u);
  rng.shuffle(std::span<std::uint32_t>(all));
  Splits s;
  s.test.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.retrieval.assign(all.begin() + static_cast<std::ptrdiff_t>(n_test), all.end());
  IndexList pool = s.retrieval;
  rng.shuffle(std::span<std::uint32_t>(pool));
  s.train.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.retrieval.begin(), s.retrieval.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

// ---------------------------------------------------------------------------
// Directory format

namespace {

void write_index_line(std::ostream& os, const char* name, const IndexList& ids) {
  os << name << ':';
  for (auto id : ids) os << ' ' << id;
  os << '\n';
}

std::map<std::string, std::string> read_manifest(const fs::path& path) {
  auto is = io::open_input(path);
  std::map<std::string, std::string> fields;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    fields[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return fields;
}

template <typename T>
T manifest_number(const std::map<std::string, std::string>& fields, const std::string& key) {
  auto it = fields.find(key);
  if (it == fields.end()) throw FormatError("manifest is missing '" + key + "'");
  T value{};
  const auto& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("manifest field '" + key + "' is not a number: " + s);
  }
  return value;
}

template <typename T>
std::vector<T> read_array(const fs::path& path, std::size_t count) {
  auto is = io::open_input(path, true);
  std::vector<T> values(count);
  io::read_le(is, std::span<T>(values), path.string());
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes");
  return values;
}

IndexList parse_ids(std::istringstream& is) {
  IndexList ids;
  std::uint32_t id;
  while (is >> id) ids.push_back(id);
  if (!is.eof()) throw FormatError("non-numeric entry in index list");
  return ids;
}

}  // namespace

void save_dataset(const PairedDataset& data, const fs::path& dir) {
  data.validate();
  fs::create_directories(dir);
  io::write_atomically(dir / "manifest", [&](std::ostream& os) {
    os << "version = " << PairedDataset::kFormatVersion << '\n'
       << "n = " << data.size() << '\n'
       << "classes = " << data.classes << '\n'
       << "vocab = " << data.vocab << '\n'
       << "image_height = " << data.image.height << '\n'
       << "image_width = " << data.image.width << '\n'
       << "image_channels = " << data.image.channels << '\n'
       << "grid_height = " << data.grid_height << '\n'
       << "grid_width = " << data.grid_width << '\n'
       << "seed = " << data.seed << '\n'
       << "noise = " << io::format_double(data.noise) << '\n'
       << "masks = " << (data.has_masks() ? 1 : 0) << '\n';
  });
  io::write_atomically(dir / "images.f32",
                       [&](std::ostream& os) { io::write_le(os, std::span<const float>(data.images)); });
  io::write_atomically(dir / "bow.f32", [&](std::ostream& os) { io::write_le(os, std::span<const float>(data.bow)); });
  io::write_atomically(dir / "labels.txt", [&](std::ostream& os) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      os << i << ':';
      for (auto l : data.labels[i]) os << ' ' << l;
      os << '\n';
    }
  });
  if (data.has_masks()) {
    io::write_atomically(dir / "masks.u8", [&](std::ostream& os) {
      os.write(reinterpret_cast<const char*>(data.masks.data()), static_cast<std::streamsize>(data.masks.size()));
    });
  } else if (fs::exists(dir / "masks.u8")) {
    fs::remove(dir / "masks.u8");
  }
  io::write_atomically(dir / "splits.txt", [&](std::ostream& os) {
    write_index_line(os, "test", data.splits.test);
    write_index_line(os, "retrieval", data.splits.retrieval);
    write_index_line(os, "train", data.splits.train);
  });
}

PairedDataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw NotFoundError("no dataset directory at " + dir.string());
  const auto fields = read_manifest(dir / "manifest");
  const int version = manifest_number<int>(fields, "version");
  if (version != PairedDataset::kFormatVersion) {
    throw VersionError("dataset format version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(PairedDataset::kFormatVersion) + ")");
  }
  PairedDataset data;
  const auto n = manifest_number<std::size_t>(fields, "n");
  data.classes = manifest_number<std::size_t>(fields, "classes");
  data.vocab = manifest_number<std::size_t>(fields, "vocab");
  data.image.height = manifest_number<std::size_t>(fields, "image_height");
  data.image.width = manifest_number<std::size_t>(fields, "image_width");
  data.image.channels = manifest_number<std::size_t>(fields, "image_channels");
  data.grid_height = manifest_number<std::size_t>(fields, "grid_height");
  data.grid_width = manifest_number<std::size_t>(fields, "grid_width");
  data.seed = manifest_number<std::uint64_t>(fields, "seed");
  data.noise = manifest_number<double>(fields, "noise");
  const bool has_masks = manifest_number<int>(fields, "masks") != 0;

  data.images = read_array<float>(dir / "images.f32", n * data.image_values());
  data.bow = read_array<float>(dir / "bow.f32", n * data.vocab);
  if (has_masks) data.masks = read_array<std::uint8_t>(dir / "masks.u8", n * data.grid_cells());

  {
    auto is = io::open_input(dir / "labels.txt");
    data.labels.resize(n);
    std::string line;
    std::size_t count = 0;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto colon = line.find(':');
      if (colon == std::string::npos) throw FormatError("labels.txt: missing ':' in line " + std::to_string(count + 1));
      const std::size_t id = std::stoul(line.substr(0, colon));
      if (id >= n) throw FormatError("labels.txt: id " + std::to_string(id) + " out of range");
      std::istringstream rest(line.substr(colon + 1));
      data.labels[id] = parse_ids(rest);
      ++count;
    }
    if (count != n) throw FormatError("labels.txt: expected " + std::to_string(n) + " records, got " + std::to_string(count));
  }
  {
    auto is = io::open_input(dir / "splits.txt");
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto colon = line.find(':');
      if (colon == std::string::npos) throw FormatError("splits.txt: missing ':'");
      const std::string name = line.substr(0, colon);
      std::istringstream rest(line.substr(colon + 1));
      IndexList ids = parse_ids(rest);
      if (name == "test") {
        data.splits.test = std::move(ids);
      } else if (name == "retrieval") {
        data.splits.retrieval = std::move(ids);
      } else if (name == "train") {
        data.splits.train = std::move(ids);
      } else {
        throw FormatError("splits.txt: unknown split '" + name + "'");
      }
    }
  }
  data.validate();
  return data;
}

}  // namespace xmh
