#include "llnn/data.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

#include <zlib.h>

#include "llnn/random.hpp"

namespace llnn {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t at) {
    return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
           (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::string hex32(std::uint32_t v) {
    std::ostringstream os;
    os << "0x" << std::hex;
    os.width(8);
    os.fill('0');
    os << v;
    return os.str();
}

bool is_gzip(std::span<const std::uint8_t> bytes) { return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b; }

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes) {
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw FormatError("gzip: inflateInit failed");
    zs.next_in = const_cast<Bytef*>(bytes.data());
    zs.avail_in = static_cast<uInt>(bytes.size());
    std::vector<std::uint8_t> out;
    std::uint8_t buf[1 << 16];
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = buf;
        zs.avail_out = sizeof(buf);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw FormatError("gzip: corrupt stream");
        }
        out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
        if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
            inflateEnd(&zs);
            throw FormatError("gzip: truncated stream");
        }
    }
    inflateEnd(&zs);
    return out;
}

void transpose_in_place(std::span<std::uint8_t> img) {
    for (std::size_t r = 0; r < kImageSide; ++r) {
        for (std::size_t c = r + 1; c < kImageSide; ++c) std::swap(img[r * kImageSide + c], img[c * kImageSide + r]);
    }
}

std::string char_name(char32_t c) {
    if (c < 0x80) return std::string(1, static_cast<char>(c));
    return "U+" + hex32(static_cast<std::uint32_t>(c));
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path.string());
    return bytes;
}

IdxTensor parse_idx(std::span<const std::uint8_t> raw) {
    std::vector<std::uint8_t> inflated;
    std::span<const std::uint8_t> bytes = raw;
    if (is_gzip(raw)) {
        inflated = gunzip(raw);
        bytes = inflated;
    }
    if (bytes.size() < 4) throw FormatError("idx: stream shorter than the 4-byte magic");
    IdxTensor t;
    t.magic = read_be32(bytes, 0);
    std::size_t ndims = 0;
    if (t.magic == kIdxImageMagic) {
        ndims = 3;
    } else if (t.magic == kIdxLabelMagic) {
        ndims = 1;
    } else {
        throw FormatError("idx: unexpected magic " + hex32(t.magic) + " (expected " + hex32(kIdxImageMagic) +
                          " or " + hex32(kIdxLabelMagic) + ")");
    }
    if (bytes.size() < 4 + 4 * ndims) throw FormatError("idx: truncated header");
    std::size_t total = 1;
    for (std::size_t d = 0; d < ndims; ++d) {
        t.dims.push_back(read_be32(bytes, 4 + 4 * d));
        total *= t.dims.back();
    }
    const std::size_t offset = 4 + 4 * ndims;
    if (bytes.size() - offset < total) {
        throw FormatError("idx: truncated payload, expected " + std::to_string(total) + " bytes, found " +
                          std::to_string(bytes.size() - offset));
    }
    t.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                  bytes.begin() + static_cast<std::ptrdiff_t>(offset + total));
    return t;
}

std::vector<std::uint8_t> serialize_idx(const IdxTensor& tensor) {
    std::vector<std::uint8_t> out;
    write_be32(out, tensor.magic);
    for (std::uint32_t d : tensor.dims) write_be32(out, d);
    out.insert(out.end(), tensor.data.begin(), tensor.data.end());
    return out;
}

void CharMap::add(std::uint32_t cls, char32_t codepoint) {
    by_char_[codepoint] = cls;
    by_class_[cls] = codepoint;
}

std::uint32_t CharMap::class_of(char32_t c) const {
    auto it = by_char_.find(c);
    if (it == by_char_.end()) throw ConfigError("mapping: character '" + char_name(c) + "' is not mapped");
    return it->second;
}

char32_t CharMap::char_of(std::uint32_t cls) const {
    auto it = by_class_.find(cls);
    if (it == by_class_.end()) throw ConfigError("mapping: class " + std::to_string(cls) + " is not mapped");
    return it->second;
}

CharMap parse_mapping(const std::string& text) {
    CharMap map;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        long long cls = -1, cp = -1;
        if (!(ls >> cls >> cp) || cls < 0 || cp < 0) {
            throw FormatError("mapping: line " + std::to_string(lineno) + " is not 'class codepoint'");
        }
        map.add(static_cast<std::uint32_t>(cls), static_cast<char32_t>(cp));
    }
    return map;
}

LabeledImages load_labeled_images(const std::filesystem::path& image_path, const std::filesystem::path& label_path) {
    const IdxTensor images = parse_idx(read_file(image_path));
    const IdxTensor labels = parse_idx(read_file(label_path));
    if (images.magic != kIdxImageMagic) throw FormatError(image_path.string() + ": not an image file");
    if (labels.magic != kIdxLabelMagic) throw FormatError(label_path.string() + ": not a label file");
    if (images.dims[1] != kImageSide || images.dims[2] != kImageSide) {
        throw FormatError(image_path.string() + ": images are not 28x28");
    }
    if (images.dims[0] != labels.dims[0]) {
        throw FormatError("image count " + std::to_string(images.dims[0]) + " does not match label count " +
                          std::to_string(labels.dims[0]));
    }
    LabeledImages out;
    out.pixels = images.data;
    out.labels.assign(labels.data.begin(), labels.data.end());
    for (std::size_t i = 0; i < out.count(); ++i) {
        transpose_in_place({out.pixels.data() + i * kImagePixels, kImagePixels});
    }
    return out;
}

namespace {

void require_chars(const CharMap& map) {
    std::string missing;
    for (char c : kRequiredChars) {
        if (!map.contains(static_cast<char32_t>(c))) {
            if (!missing.empty()) missing += ", ";
            missing += c;
        }
    }
    if (!missing.empty()) throw ConfigError("mapping is missing required characters: " + missing);
}

std::string read_text(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return std::string(bytes.begin(), bytes.end());
}

std::filesystem::path find_variant(const std::filesystem::path& dir, const std::string& stem) {
    for (const std::string suffix : {"", ".gz"}) {
        auto p = dir / (stem + suffix);
        if (std::filesystem::exists(p)) return p;
    }
    throw IoError("missing data file " + (dir / stem).string() + "[.gz]");
}

}  // namespace

EmnistData load_emnist(const std::filesystem::path& image_path, const std::filesystem::path& label_path,
                       const std::filesystem::path& mapping_path) {
    EmnistData out;
    out.mapping = parse_mapping(read_text(mapping_path));
    require_chars(out.mapping);
    out.images = load_labeled_images(image_path, label_path);
    return out;
}

DataSource load_emnist_dir(const std::filesystem::path& dir) {
    DataSource src;
    src.mapping = parse_mapping(read_text(find_variant(dir, "emnist-balanced-mapping.txt")));
    require_chars(src.mapping);
    src.train = load_labeled_images(find_variant(dir, "emnist-balanced-train-images-idx3-ubyte"),
                                    find_variant(dir, "emnist-balanced-train-labels-idx1-ubyte"));
    src.test = load_labeled_images(find_variant(dir, "emnist-balanced-test-images-idx3-ubyte"),
                                   find_variant(dir, "emnist-balanced-test-labels-idx1-ubyte"));
    src.origin = "emnist";
    return src;
}

std::vector<std::size_t> DataSource::indices_of(const LabeledImages& split, char32_t c) const {
    const std::uint32_t cls = mapping.class_of(c);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.count(); ++i) {
        if (split.labels[i] == cls) out.push_back(i);
    }
    return out;
}

void TaskSpec::validate() const {
    if (std::find(negative_chars.begin(), negative_chars.end(), positive_char) != negative_chars.end()) {
        throw ConfigError(std::string("task: positive character '") + positive_char + "' is in the negative pool");
    }
    if (negative_chars.empty()) throw ConfigError("task: negative pool is empty");
    if (n_pos_train < 1) throw ConfigError("task: n_pos_train must be >= 1");
    if (n_neg_train_per_char < 1) throw ConfigError("task: n_neg_train_per_char must be >= 1");
}

Matrix to_inputs(const LabeledImages& images, std::span<const std::size_t> indices) {
    Matrix out(static_cast<Eigen::Index>(kImagePixels), static_cast<Eigen::Index>(indices.size()));
    for (std::size_t j = 0; j < indices.size(); ++j) {
        const auto img = images.image(indices[j]);
        for (std::size_t p = 0; p < kImagePixels; ++p) {
            out(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(j)) = img[p] / 255.0;
        }
    }
    return out;
}

TaskDataset build_task(const DataSource& source, const TaskSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    auto draw = [&](char c, std::size_t n) {
        std::vector<std::size_t> pool = source.indices_of(source.train, static_cast<char32_t>(c));
        if (pool.size() < n) {
            throw ConfigError(std::string("task: character '") + c + "' has " + std::to_string(pool.size()) +
                              " training samples, " + std::to_string(n - pool.size()) + " short of " +
                              std::to_string(n));
        }
        shuffle(std::span<std::size_t>(pool), rng);
        pool.resize(n);
        return pool;
    };

    TaskDataset ds;
    ds.spec = spec;
    ds.seed = seed;
    ds.train_pos_indices = draw(spec.positive_char, spec.n_pos_train);
    for (char c : spec.negative_chars) {
        const auto picked = draw(c, spec.n_neg_train_per_char);
        ds.train_neg_indices.insert(ds.train_neg_indices.end(), picked.begin(), picked.end());
    }
    ds.train_pos = to_inputs(source.train, ds.train_pos_indices);
    ds.train_neg = to_inputs(source.train, ds.train_neg_indices);

    const auto test_pos = source.indices_of(source.test, static_cast<char32_t>(spec.positive_char));
    std::vector<std::size_t> test_neg;
    for (char c : spec.negative_chars) {
        const auto idx = source.indices_of(source.test, static_cast<char32_t>(c));
        test_neg.insert(test_neg.end(), idx.begin(), idx.end());
    }
    if (test_pos.empty() || test_neg.empty()) {
        throw ConfigError(std::string("task '") + spec.positive_char + "': test split lacks samples");
    }
    ds.test_pos = to_inputs(source.test, test_pos);
    ds.test_neg = to_inputs(source.test, test_neg);
    return ds;
}

void write_emnist_layout(const DataSource& source, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto write_bytes = [](const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
        std::ofstream out(p, std::ios::binary);
        if (!out) throw IoError("cannot write " + p.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed: " + p.string());
    };
    auto write_split = [&](const LabeledImages& split, const std::string& name) {
        IdxTensor img{kIdxImageMagic,
                      {static_cast<std::uint32_t>(split.count()), kImageSide, kImageSide},
                      split.pixels};
        for (std::size_t i = 0; i < split.count(); ++i) {
            transpose_in_place({img.data.data() + i * kImagePixels, kImagePixels});
        }
        IdxTensor lbl{kIdxLabelMagic, {static_cast<std::uint32_t>(split.count())}, {}};
        for (auto l : split.labels) lbl.data.push_back(static_cast<std::uint8_t>(l));
        write_bytes(dir / ("emnist-balanced-" + name + "-images-idx3-ubyte"), serialize_idx(img));
        write_bytes(dir / ("emnist-balanced-" + name + "-labels-idx1-ubyte"), serialize_idx(lbl));
    };
    write_split(source.train, "train");
    write_split(source.test, "test");
    std::ofstream map(dir / "emnist-balanced-mapping.txt");
    if (!map) throw IoError("cannot write " + (dir / "emnist-balanced-mapping.txt").string());
    std::map<std::uint32_t, char32_t> ordered;
    for (const auto& [c, cls] : source.mapping.entries()) ordered[cls] = c;
    for (const auto& [cls, c] : ordered) map << cls << ' ' << static_cast<std::uint32_t>(c) << '\n';
}

}  // namespace llnn
