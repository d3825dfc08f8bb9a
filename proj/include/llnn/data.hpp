#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "llnn/errors.hpp"
#include "llnn/weight_block.hpp"

namespace llnn {

inline constexpr std::size_t kImageSide = 28;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Decoded IDX tensor of unsigned bytes.
struct IdxTensor {
    std::uint32_t magic = 0;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> data;
};

/// Parses an IDX byte stream (ubyte element type only). Gzip-compressed
/// streams are inflated first.
IdxTensor parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_idx(const IdxTensor& tensor);

/// Row-major 28x28 byte images with class labels.
struct LabeledImages {
    std::vector<std::uint8_t> pixels;  // count * 784
    std::vector<std::uint32_t> labels;
    std::size_t count() const { return labels.size(); }
    std::span<const std::uint8_t> image(std::size_t i) const {
        return {pixels.data() + i * kImagePixels, kImagePixels};
    }
};

/// Character <-> class index table.
class CharMap {
public:
    void add(std::uint32_t cls, char32_t codepoint);
    std::uint32_t class_of(char32_t c) const;
    bool contains(char32_t c) const { return by_char_.count(c) != 0; }
    char32_t char_of(std::uint32_t cls) const;
    const std::map<char32_t, std::uint32_t>& entries() const { return by_char_; }

private:
    std::map<char32_t, std::uint32_t> by_char_;
    std::map<std::uint32_t, char32_t> by_class_;
};

/// Characters every experiment needs.
inline constexpr char kRequiredChars[] = {'0', '1', '2', '3', 'O', 'Z', 'P', 'Q', 'R', 'S'};

/// Parses "class_index codepoint" lines.
CharMap parse_mapping(const std::string& text);

/// Pairs an image and a label IDX file; images are transposed to upright.
LabeledImages load_labeled_images(const std::filesystem::path& image_path, const std::filesystem::path& label_path);

struct EmnistData {
    LabeledImages images;
    CharMap mapping;
};

/// Loads one split plus the mapping and checks the required characters.
EmnistData load_emnist(const std::filesystem::path& image_path, const std::filesystem::path& label_path,
                       const std::filesystem::path& mapping_path);

/// Train and test splits with their shared character table.
struct DataSource {
    LabeledImages train;
    LabeledImages test;
    CharMap mapping;
    std::string origin;  // "emnist" or "synthetic"

    /// Indices of all samples of `c` in the given split, ascending.
    std::vector<std::size_t> indices_of(const LabeledImages& split, char32_t c) const;
};

/// Finds `emnist-balanced-{train,test}-{images-idx3,labels-idx1}-ubyte[.gz]`
/// and `emnist-balanced-mapping.txt` in `dir`.
DataSource load_emnist_dir(const std::filesystem::path& dir);

struct TaskSpec {
    char positive_char = '0';
    std::vector<char> negative_chars{'P', 'Q', 'R', 'S'};
    std::size_t n_pos_train = 100;
    std::size_t n_neg_train_per_char = 100;

    void validate() const;
};

/// One binary task. Samples are columns of 784 values in [0, 1].
struct TaskDataset {
    TaskSpec spec;
    std::uint64_t seed = 0;
    Matrix train_pos, train_neg, test_pos, test_neg;
    std::vector<std::size_t> train_pos_indices, train_neg_indices;
};

TaskDataset build_task(const DataSource& source, const TaskSpec& spec, std::uint64_t seed);

/// Scales the selected images to [0, 1] and stacks them as columns.
Matrix to_inputs(const LabeledImages& images, std::span<const std::size_t> indices);

/// Characters synthetic_glyphs can draw.
inline constexpr char kSyntheticChars[] = {'0', '1', '2', '3', 'O', 'Z', 'P', 'Q', 'R', 'S'};

/// Class table used for synthetic data (EMNIST-balanced ordering).
CharMap synthetic_mapping();

/// Renders 28x28 glyphs for each character with seeded jitter. Returns
/// (train, test) with `per_char` and `test_per_char` samples per character.
std::pair<LabeledImages, LabeledImages> synthetic_glyphs(const std::vector<char>& chars, std::size_t per_char,
                                                         std::uint64_t seed, std::size_t test_per_char = 0);

/// Full synthetic source covering every supported character.
DataSource synthetic_source(std::size_t train_per_char, std::size_t test_per_char, std::uint64_t seed);

/// Writes a source in the EMNIST file layout (images stored transposed).
void write_emnist_layout(const DataSource& source, const std::filesystem::path& dir);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace llnn
