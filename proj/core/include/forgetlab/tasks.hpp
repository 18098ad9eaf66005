#pragma once

// Task construction: teacher pairs with controlled feature similarity, Gaussian
// input streams, and labelled image datasets for the data-mixing protocol.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <utility>

#include "forgetlab/network.hpp"

namespace forgetlab {

enum class SimilarityScheme { rotation, interpolation };

std::string_view to_string(SimilarityScheme s) noexcept;
SimilarityScheme parse_similarity_scheme(std::string_view name);

struct TaskPair {
    TwoLayerNet teacher_dag;   // head keyed Task::dagger
    TwoLayerNet teacher_ddag;  // head keyed Task::ddagger
    double similarity = 0.0;
    SimilarityScheme scheme = SimilarityScheme::interpolation;
};

/// Single-unit teachers whose normalised feature overlap is exactly V:
/// w_dag = sqrt(D) R e2, w_ddag = sqrt(D) R (sin theta e1 + cos theta e2) with
/// cos theta = V and R a Haar-random orthogonal frame. Both heads are +1.
TaskPair make_rotated_pair(int D, double V, std::uint64_t seed,
                           ActivationKind activation = ActivationKind::scaled_erf);

/// W_ddag = V W_dag + sqrt(1 - V^2) Z with W_dag, Z i.i.d. N(0, 1). Teacher heads
/// are +1 for single-unit teachers and i.i.d. N(0, 1) otherwise.
TaskPair make_interpolated_pair(int D, int M, int P, double V, std::uint64_t seed,
                                ActivationKind activation = ActivationKind::scaled_erf);

/// Endless stream of i.i.d. standard normal D-vectors.
class GaussianStream {
public:
    GaussianStream(int D, std::uint64_t seed);
    int dim() const noexcept { return dim_; }
    void next(std::span<double> out);

private:
    int dim_;
    Rng rng_;
};

/// Labels a Gaussian input stream with a fixed teacher network.
class TeacherSource final : public LabelSource {
public:
    explicit TeacherSource(TwoLayerNet teacher);
    int dim() const override { return teacher_.D(); }
    double draw(Rng& rng, std::span<double> x) const override;
    const TwoLayerNet* teacher() const override { return &teacher_; }

private:
    TwoLayerNet teacher_;
    Task head_;
};

struct LabeledDataset {
    RowMatrix inputs;  // N x D
    VectorX labels;    // N
    std::string name;

    int size() const noexcept { return static_cast<int>(inputs.rows()); }
    int dim() const noexcept { return static_cast<int>(inputs.cols()); }
    void validate() const;
};

/// Uniform sampling with replacement from a training set, with an optional held-out split.
class DatasetSource final : public LabelSource {
public:
    DatasetSource(std::shared_ptr<const LabeledDataset> train,
                  std::shared_ptr<const LabeledDataset> test = nullptr);
    int dim() const override { return train_->dim(); }
    double draw(Rng& rng, std::span<double> x) const override;
    const LabeledDataset* held_out() const override { return test_.get(); }

private:
    std::shared_ptr<const LabeledDataset> train_;
    std::shared_ptr<const LabeledDataset> test_;
};

/// alpha * d1 + (1 - alpha) * d2, index-aligned, inputs and labels alike.
LabeledDataset mix_datasets(const LabeledDataset& d1, const LabeledDataset& d2, double alpha);

/// Reads an IDX image/label file pair (MNIST layout), keeps the two `classes`
/// (labels -1 for the first, +1 for the second), scales pixels to [0, 1],
/// zero-pads each flattened image to `target_dim`, and truncates the classes to
/// equal counts. Throws FormatError or ArgumentError.
LabeledDataset load_idx_pair(const std::filesystem::path& images_path,
                             const std::filesystem::path& labels_path, std::pair<int, int> classes,
                             int target_dim);

/// Writes IDX files (magic 0x803 / 0x801). `images` is N x (rows*cols) bytes row-major.
void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
               std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels, int rows,
               int cols);

/// Synthetic 28x28 "garment" images for classes 0..9: a smooth class prototype
/// per label plus per-image jitter and pixel noise. Deterministic in `seed`.
void synthesize_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                    int per_class, std::uint64_t seed);

/// FLAB1 cache: "FLAB1", u64 N, u64 D, N*D inputs, N labels; all little-endian.
void write_flab(std::ostream& os, const LabeledDataset& data);
LabeledDataset read_flab(std::istream& is);

}  // namespace forgetlab
