#include "forgetlab/tasks.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <Eigen/QR>

#include "forgetlab/errors.hpp"

namespace forgetlab {

std::string_view to_string(SimilarityScheme s) noexcept {
    return s == SimilarityScheme::rotation ? "rotation" : "interpolation";
}

SimilarityScheme parse_similarity_scheme(std::string_view name) {
    if (name == "rotation") return SimilarityScheme::rotation;
    if (name == "interpolation") return SimilarityScheme::interpolation;
    throw ArgumentError("unknown similarity scheme '" + std::string(name) + "'");
}

namespace {

TwoLayerNet single_head_net(RowMatrix w, VectorX head, Task task, ActivationKind activation) {
    TwoLayerNet net;
    net.W = std::move(w);
    net.heads[task] = std::move(head);
    net.activation = activation;
    return net;
}

VectorX teacher_head(int units, Rng& rng) {
    if (units == 1) return VectorX::Ones(1);
    VectorX h(units);
    fill_normal(rng, {h.data(), static_cast<std::size_t>(units)});
    return h;
}

}  // namespace

TaskPair make_rotated_pair(int D, double V, std::uint64_t seed, ActivationKind activation) {
    if (D < 2) throw ArgumentError("rotation scheme needs D >= 2");
    if (!(V >= -1.0 && V <= 1.0)) throw ArgumentError("similarity V must lie in [-1, 1]");
    Rng rng(seed);
    // The first two columns of a Haar-random orthogonal matrix: thin QR of a
    // Gaussian D x 2 block with the sign convention R_ii > 0.
    MatrixX g(D, 2);
    fill_normal(rng, {g.data(), static_cast<std::size_t>(g.size())});
    Eigen::HouseholderQR<MatrixX> qr(g);
    MatrixX frame = qr.householderQ() * MatrixX::Identity(D, 2);
    const MatrixX r = qr.matrixQR().topLeftCorner(2, 2);
    for (int c = 0; c < 2; ++c)
        if (r(c, c) < 0.0) frame.col(c) *= -1.0;

    const double cos_t = V;
    const double sin_t = std::sqrt(std::max(0.0, 1.0 - V * V));
    const double scale = std::sqrt(static_cast<double>(D));
    RowMatrix w_dag(1, D), w_ddag(1, D);
    w_dag.row(0) = scale * (0.0 * frame.col(0) + 1.0 * frame.col(1)).transpose();
    w_ddag.row(0) = scale * (sin_t * frame.col(0) + cos_t * frame.col(1)).transpose();

    TaskPair pair;
    pair.teacher_dag = single_head_net(std::move(w_dag), VectorX::Ones(1), Task::dagger, activation);
    pair.teacher_ddag = single_head_net(std::move(w_ddag), VectorX::Ones(1), Task::ddagger, activation);
    pair.similarity = V;
    pair.scheme = SimilarityScheme::rotation;
    return pair;
}

TaskPair make_interpolated_pair(int D, int M, int P, double V, std::uint64_t seed,
                                ActivationKind activation) {
    if (M != P) throw ArgumentError("interpolation scheme needs M == P");
    if (D < 1 || M < 1) throw ArgumentError("teacher dimensions must be positive");
    if (!(V >= 0.0 && V <= 1.0)) throw ArgumentError("similarity V must lie in [0, 1]");
    Rng rng(seed);
    RowMatrix w_dag(M, D), z(M, D);
    fill_normal(rng, {w_dag.data(), static_cast<std::size_t>(w_dag.size())});
    fill_normal(rng, {z.data(), static_cast<std::size_t>(z.size())});
    RowMatrix w_ddag = V * w_dag + std::sqrt(1.0 - V * V) * z;
    VectorX v_dag = teacher_head(M, rng);
    VectorX v_ddag = teacher_head(P, rng);

    TaskPair pair;
    pair.teacher_dag = single_head_net(std::move(w_dag), std::move(v_dag), Task::dagger, activation);
    pair.teacher_ddag = single_head_net(std::move(w_ddag), std::move(v_ddag), Task::ddagger, activation);
    pair.similarity = V;
    pair.scheme = SimilarityScheme::interpolation;
    return pair;
}

GaussianStream::GaussianStream(int D, std::uint64_t seed) : dim_(D), rng_(seed) {
    if (D < 1) throw ArgumentError("GaussianStream needs D >= 1");
}

void GaussianStream::next(std::span<double> out) {
    if (static_cast<int>(out.size()) != dim_) throw ArgumentError("GaussianStream: output size mismatch");
    fill_normal(rng_, out);
}

TeacherSource::TeacherSource(TwoLayerNet teacher) : teacher_(std::move(teacher)) {
    if (teacher_.heads.size() != 1) throw ConfigurationError("a teacher must carry exactly one head");
    head_ = teacher_.heads.begin()->first;
}

double TeacherSource::draw(Rng& rng, std::span<double> x) const {
    fill_normal(rng, x);
    return forward(teacher_, x, head_);
}

void LabeledDataset::validate() const {
    if (inputs.rows() < 1) throw ArgumentError("dataset '" + name + "' is empty");
    if (labels.size() != inputs.rows()) throw ArgumentError("dataset '" + name + "': label count mismatch");
    if (!inputs.allFinite() || !labels.allFinite()) throw ArgumentError("dataset '" + name + "' has non-finite entries");
}

DatasetSource::DatasetSource(std::shared_ptr<const LabeledDataset> train,
                             std::shared_ptr<const LabeledDataset> test)
    : train_(std::move(train)), test_(std::move(test)) {
    if (!train_) throw ArgumentError("DatasetSource needs a training set");
    train_->validate();
    if (test_) {
        test_->validate();
        if (test_->dim() != train_->dim()) throw ArgumentError("train/test dimension mismatch");
    }
}

double DatasetSource::draw(Rng& rng, std::span<double> x) const {
    if (static_cast<int>(x.size()) != train_->dim()) throw ArgumentError("DatasetSource: input size mismatch");
    std::uniform_int_distribution<int> pick(0, train_->size() - 1);
    const int i = pick(rng);
    const auto row = train_->inputs.row(i);
    std::copy(row.data(), row.data() + row.size(), x.begin());
    return train_->labels(i);
}

LabeledDataset mix_datasets(const LabeledDataset& d1, const LabeledDataset& d2, double alpha) {
    if (d1.inputs.rows() != d2.inputs.rows() || d1.inputs.cols() != d2.inputs.cols()
        || d1.labels.size() != d2.labels.size()) {
        throw ArgumentError("mix_datasets: datasets must have equal cardinality and dimension");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("mix_datasets: alpha must lie in [0, 1]");
    if (alpha == 1.0) return d1;
    if (alpha == 0.0) return d2;
    LabeledDataset out;
    out.inputs = alpha * d1.inputs + (1.0 - alpha) * d2.inputs;
    out.labels = alpha * d1.labels + (1.0 - alpha) * d2.labels;
    std::ostringstream os;
    os << "mix(" << d1.name << "," << d2.name << "," << alpha << ")";
    out.name = os.str();
    return out;
}

namespace {

std::uint32_t read_be32(std::istream& is, const std::string& file) {
    std::array<unsigned char, 4> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw FormatError(file + ": truncated IDX header");
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

void write_be32(std::ostream& os, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                                static_cast<char>(v >> 8), static_cast<char>(v)};
    os.write(b.data(), 4);
}

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

}  // namespace

LabeledDataset load_idx_pair(const std::filesystem::path& images_path,
                             const std::filesystem::path& labels_path, std::pair<int, int> classes,
                             int target_dim) {
    const std::string img_name = images_path.string();
    const std::string lab_name = labels_path.string();
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw FormatError(img_name + ": cannot open");
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError(lab_name + ": cannot open");

    if (read_be32(img, img_name) != kIdxImages) throw FormatError(img_name + ": bad IDX image magic number");
    if (read_be32(lab, lab_name) != kIdxLabels) throw FormatError(lab_name + ": bad IDX label magic number");
    const std::uint32_t n_img = read_be32(img, img_name);
    const std::uint32_t rows = read_be32(img, img_name);
    const std::uint32_t cols = read_be32(img, img_name);
    const std::uint32_t n_lab = read_be32(lab, lab_name);
    if (n_img != n_lab) throw FormatError("IDX image and label counts differ");
    const std::size_t raw_dim = std::size_t{rows} * cols;
    if (raw_dim == 0) throw FormatError(img_name + ": zero-sized images");
    if (target_dim < static_cast<int>(raw_dim)) {
        throw ArgumentError("target_dim is smaller than the raw image dimension");
    }
    if (classes.first == classes.second) throw ArgumentError("the two classes must differ");

    std::vector<unsigned char> labels(n_lab);
    if (!lab.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(n_lab))) {
        throw FormatError(lab_name + ": truncated label data");
    }
    std::vector<unsigned char> pixels(std::size_t{n_img} * raw_dim);
    if (!img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()))) {
        throw FormatError(img_name + ": truncated image data");
    }

    std::vector<std::size_t> first, second;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == classes.first) first.push_back(i);
        if (labels[i] == classes.second) second.push_back(i);
    }
    if (first.empty() || second.empty()) {
        std::ostringstream os;
        os << "class " << (first.empty() ? classes.first : classes.second) << " not present in " << lab_name;
        throw ArgumentError(os.str());
    }
    const std::size_t per_class = std::min(first.size(), second.size());
    first.resize(per_class);
    second.resize(per_class);

    // Keep file order across both classes.
    std::vector<std::pair<std::size_t, double>> keep;
    for (auto i : first) keep.emplace_back(i, -1.0);
    for (auto i : second) keep.emplace_back(i, 1.0);
    std::sort(keep.begin(), keep.end());

    LabeledDataset out;
    out.inputs = RowMatrix::Zero(static_cast<Eigen::Index>(keep.size()), target_dim);
    out.labels.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t r = 0; r < keep.size(); ++r) {
        const unsigned char* src = pixels.data() + keep[r].first * raw_dim;
        for (std::size_t d = 0; d < raw_dim; ++d) out.inputs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)) = src[d] / 255.0;
        out.labels(static_cast<Eigen::Index>(r)) = keep[r].second;
    }
    std::ostringstream name;
    name << images_path.filename().string() << "[" << classes.first << "," << classes.second << "]";
    out.name = name.str();
    return out;
}

void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
               std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels, int rows, int cols) {
    if (rows < 1 || cols < 1) throw ArgumentError("write_idx: image shape must be positive");
    const std::size_t dim = std::size_t(rows) * std::size_t(cols);
    if (images.size() != labels.size() * dim) throw ArgumentError("write_idx: image buffer size mismatch");
    std::ofstream img(images_path, std::ios::binary);
    std::ofstream lab(labels_path, std::ios::binary);
    if (!img || !lab) throw FormatError("write_idx: cannot open output files");
    write_be32(img, kIdxImages);
    write_be32(img, static_cast<std::uint32_t>(labels.size()));
    write_be32(img, static_cast<std::uint32_t>(rows));
    write_be32(img, static_cast<std::uint32_t>(cols));
    img.write(reinterpret_cast<const char*>(images.data()), static_cast<std::streamsize>(images.size()));
    write_be32(lab, kIdxLabels);
    write_be32(lab, static_cast<std::uint32_t>(labels.size()));
    lab.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

void synthesize_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                    int per_class, std::uint64_t seed) {
    constexpr int kSide = 28;
    constexpr int kClasses = 10;
    constexpr int kBlobs = 4;
    if (per_class < 1) throw ArgumentError("synthesize_idx: per_class must be positive");

    // Each class prototype is a sum of Gaussian blobs; a shared "body" blob gives
    // all classes common structure.
    struct Blob { double cx, cy, sx, sy, amp; };
    std::array<std::array<Blob, kBlobs + 1>, kClasses> protos{};
    Rng proto_rng(derive_seed(seed, 0));
    std::uniform_real_distribution<double> pos(6.0, 22.0), width(2.0, 6.0), amp(0.4, 1.0);
    for (auto& p : protos) {
        p[0] = {14.0, 14.0, 7.0, 9.0, 0.5};
        for (int b = 1; b <= kBlobs; ++b) p[b] = {pos(proto_rng), pos(proto_rng), width(proto_rng), width(proto_rng), amp(proto_rng)};
    }

    Rng rng(derive_seed(seed, 1));
    std::normal_distribution<double> jitter(0.0, 1.0), noise(0.0, 0.08), gain(1.0, 0.15);
    const int n = per_class * kClasses;
    std::vector<std::uint8_t> images(std::size_t(n) * kSide * kSide), labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int cls = i % kClasses;
        labels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(cls);
        const double dx = jitter(rng), dy = jitter(rng), g = gain(rng);
        for (int y = 0; y < kSide; ++y) {
            for (int x = 0; x < kSide; ++x) {
                double v = 0.0;
                for (const Blob& b : protos[static_cast<std::size_t>(cls)]) {
                    const double ux = (x - b.cx - dx) / b.sx;
                    const double uy = (y - b.cy - dy) / b.sy;
                    v += b.amp * std::exp(-0.5 * (ux * ux + uy * uy));
                }
                v = std::clamp(g * v + noise(rng), 0.0, 1.0);
                images[std::size_t(i) * kSide * kSide + std::size_t(y) * kSide + std::size_t(x)] =
                    static_cast<std::uint8_t>(std::lround(255.0 * v));
            }
        }
    }
    write_idx(images_path, labels_path, images, labels, kSide, kSide);
}

namespace {

constexpr char kFlabMagic[5] = {'F', 'L', 'A', 'B', '1'};

template <typename T>
void write_le(std::ostream& os, T value) {
    static_assert(std::endian::native == std::endian::little, "FLAB1 writer assumes a little-endian host");
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    T value{};
    if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) throw FormatError("FLAB1: truncated stream");
    return value;
}

}  // namespace

void write_flab(std::ostream& os, const LabeledDataset& data) {
    data.validate();
    os.write(kFlabMagic, sizeof(kFlabMagic));
    write_le<std::uint64_t>(os, static_cast<std::uint64_t>(data.size()));
    write_le<std::uint64_t>(os, static_cast<std::uint64_t>(data.dim()));
    for (Eigen::Index r = 0; r < data.inputs.rows(); ++r)
        for (Eigen::Index c = 0; c < data.inputs.cols(); ++c) write_le<double>(os, data.inputs(r, c));
    for (Eigen::Index r = 0; r < data.labels.size(); ++r) write_le<double>(os, data.labels(r));
}

LabeledDataset read_flab(std::istream& is) {
    char magic[5];
    if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kFlabMagic, sizeof(magic)) != 0) {
        throw FormatError("FLAB1: bad magic");
    }
    const auto n = read_le<std::uint64_t>(is);
    const auto d = read_le<std::uint64_t>(is);
    if (n == 0 || d == 0 || n > (1ULL << 31) || d > (1ULL << 31)) throw FormatError("FLAB1: implausible shape");
    LabeledDataset out;
    out.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    out.labels.resize(static_cast<Eigen::Index>(n));
    for (Eigen::Index r = 0; r < out.inputs.rows(); ++r)
        for (Eigen::Index c = 0; c < out.inputs.cols(); ++c) out.inputs(r, c) = read_le<double>(is);
    for (Eigen::Index r = 0; r < out.labels.size(); ++r) out.labels(r) = read_le<double>(is);
    out.name = "flab";
    return out;
}

}  // namespace forgetlab
