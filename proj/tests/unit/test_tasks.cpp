#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "forgetlab/errors.hpp"
#include "forgetlab/tasks.hpp"

using namespace forgetlab;
namespace fs = std::filesystem;

namespace {

double overlap(const TwoLayerNet& a, const TwoLayerNet& b) {
    return a.W.row(0).dot(b.W.row(0)) / static_cast<double>(a.D());
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("forgetlab_tasks_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST(RotatedPair, ExactOverlaps) {
    for (double v : {0.0, 0.3, 0.5, 1.0}) {
        const TaskPair p = make_rotated_pair(500, v, 7);
        EXPECT_NEAR(overlap(p.teacher_dag, p.teacher_dag), 1.0, 1e-12);
        EXPECT_NEAR(overlap(p.teacher_ddag, p.teacher_ddag), 1.0, 1e-12);
        EXPECT_NEAR(overlap(p.teacher_dag, p.teacher_ddag), v, 1e-12);
        EXPECT_EQ(p.teacher_dag.head(Task::dagger)(0), 1.0);
        EXPECT_EQ(p.teacher_ddag.head(Task::ddagger)(0), 1.0);
    }
}

TEST(RotatedPair, SeedDeterminesFrame) {
    EXPECT_TRUE(make_rotated_pair(50, 0.4, 1).teacher_dag == make_rotated_pair(50, 0.4, 1).teacher_dag);
    EXPECT_FALSE(make_rotated_pair(50, 0.4, 1).teacher_dag == make_rotated_pair(50, 0.4, 2).teacher_dag);
}

TEST(RotatedPair, RejectsBadSimilarity) {
    EXPECT_THROW(make_rotated_pair(50, 1.5, 1), ArgumentError);
    EXPECT_THROW(make_rotated_pair(1, 0.5, 1), ArgumentError);
}

TEST(InterpolatedPair, OverlapConcentrates) {
    const int D = 20000;
    const TaskPair p = make_interpolated_pair(D, 1, 1, 0.6, 3);
    EXPECT_NEAR(overlap(p.teacher_dag, p.teacher_ddag), 0.6, 5.0 / std::sqrt(D));
    EXPECT_NEAR(overlap(p.teacher_ddag, p.teacher_ddag), 1.0, 5.0 * std::sqrt(2.0 / D));
    const TaskPair same = make_interpolated_pair(100, 2, 2, 1.0, 3);
    EXPECT_TRUE(same.teacher_dag.W == same.teacher_ddag.W);
}

TEST(GaussianStream, MomentsAndDeterminism) {
    GaussianStream a(10, 5), b(10, 5);
    std::vector<double> x(10), y(10);
    double sum = 0.0, sum2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        a.next(x);
        b.next(y);
        ASSERT_EQ(x, y);
        for (double v : x) {
            sum += v;
            sum2 += v * v;
        }
    }
    const double N = 10.0 * n;
    EXPECT_NEAR(sum / N, 0.0, 5.0 / std::sqrt(N));
    EXPECT_NEAR(sum2 / N, 1.0, 5.0 * std::sqrt(2.0 / N));
}

TEST(TeacherSource, LabelIsTeacherOutput) {
    const TaskPair p = make_rotated_pair(40, 0.2, 1);
    const TeacherSource src(p.teacher_ddag);
    Rng rng(3);
    std::vector<double> x(40);
    const double y = src.draw(rng, x);
    EXPECT_EQ(y, forward(p.teacher_ddag, x, Task::ddagger));
    EXPECT_NE(src.teacher(), nullptr);
}

TEST(MixDatasets, Endpoints) {
    LabeledDataset a, b;
    a.inputs = RowMatrix::Constant(3, 2, 1.0);
    a.labels = VectorX::Constant(3, -1.0);
    b.inputs = RowMatrix::Constant(3, 2, 3.0);
    b.labels = VectorX::Constant(3, 1.0);
    EXPECT_TRUE(mix_datasets(a, b, 1.0).inputs == a.inputs);
    EXPECT_TRUE(mix_datasets(a, b, 0.0).labels == b.labels);
    const auto half = mix_datasets(a, b, 0.5);
    EXPECT_EQ(half.inputs(2, 1), 2.0);
    EXPECT_EQ(half.labels(0), 0.0);
    LabeledDataset c = b;
    c.inputs.conservativeResize(2, Eigen::NoChange);
    c.labels.conservativeResize(2);
    EXPECT_THROW(mix_datasets(a, c, 0.5), ArgumentError);
    EXPECT_THROW(mix_datasets(a, b, 1.5), ArgumentError);
}

TEST(Idx, RoundTripAndPadding) {
    const fs::path dir = scratch("idx");
    // Four 2x2 images with labels 0, 3, 0, 3.
    const std::vector<std::uint8_t> images{0,   255, 0,  0,  //
                                           51,  51,  51, 51,  //
                                           255, 0,   0,  0,  //
                                           102, 0,   0,  0};
    const std::vector<std::uint8_t> labels{0, 3, 0, 3};
    write_idx(dir / "img", dir / "lbl", images, labels, 2, 2);
    const auto d = load_idx_pair(dir / "img", dir / "lbl", {0, 3}, 6);
    ASSERT_EQ(d.size(), 4);
    ASSERT_EQ(d.dim(), 6);
    EXPECT_EQ(d.labels(0), -1.0);
    EXPECT_EQ(d.labels(1), 1.0);
    EXPECT_DOUBLE_EQ(d.inputs(0, 1), 1.0);
    EXPECT_DOUBLE_EQ(d.inputs(1, 0), 0.2);
    EXPECT_EQ(d.inputs(0, 4), 0.0);
    EXPECT_EQ(d.inputs(0, 5), 0.0);
    EXPECT_THROW(load_idx_pair(dir / "img", dir / "lbl", {0, 3}, 3), ArgumentError);
    fs::remove_all(dir);
}

TEST(Idx, BalancesClasses) {
    const fs::path dir = scratch("balance");
    const std::vector<std::uint8_t> images(5, 7);
    const std::vector<std::uint8_t> labels{1, 1, 1, 2, 9};
    write_idx(dir / "img", dir / "lbl", images, labels, 1, 1);
    const auto d = load_idx_pair(dir / "img", dir / "lbl", {1, 2}, 1);
    EXPECT_EQ(d.size(), 2);
    EXPECT_DOUBLE_EQ(d.labels.sum(), 0.0);
    fs::remove_all(dir);
}

TEST(Idx, BadMagicAndTruncation) {
    const fs::path dir = scratch("bad");
    {
        std::ofstream os(dir / "img", std::ios::binary);
        const char bytes[8] = {0, 0, 8, 4, 0, 0, 0, 1};
        os.write(bytes, sizeof bytes);
    }
    const std::vector<std::uint8_t> images(4, 0), labels{0};
    write_idx(dir / "ok_img", dir / "lbl", images, labels, 2, 2);
    EXPECT_THROW(load_idx_pair(dir / "img", dir / "lbl", {0, 1}, 4), FormatError);
    fs::resize_file(dir / "ok_img", 16 + 2);
    EXPECT_THROW(load_idx_pair(dir / "ok_img", dir / "lbl", {0, 1}, 4), FormatError);
    EXPECT_THROW(load_idx_pair(dir / "missing", dir / "lbl", {0, 1}, 4), FormatError);
    fs::remove_all(dir);
}

TEST(Idx, SynthesizedFixturesLoad) {
    const fs::path dir = scratch("synth");
    synthesize_idx(dir / "img", dir / "lbl", 20, 7);
    const auto d = load_idx_pair(dir / "img", dir / "lbl", {0, 5}, 1024);
    EXPECT_EQ(d.size(), 40);
    EXPECT_GE(d.inputs.minCoeff(), 0.0);
    EXPECT_LE(d.inputs.maxCoeff(), 1.0);
    const fs::path dir2 = scratch("synth2");
    synthesize_idx(dir2 / "img", dir2 / "lbl", 20, 7);
    EXPECT_TRUE(load_idx_pair(dir2 / "img", dir2 / "lbl", {0, 5}, 1024).inputs == d.inputs);
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST(Flab, RoundTrip) {
    LabeledDataset d;
    d.inputs = RowMatrix(2, 3);
    d.inputs << 0.1, -2.5, 1e-300, 4, 5, 6;
    d.labels = VectorX(2);
    d.labels << -1, 1;
    std::stringstream ss;
    write_flab(ss, d);
    EXPECT_EQ(ss.str().substr(0, 5), "FLAB1");
    const auto back = read_flab(ss);
    EXPECT_TRUE(back.inputs == d.inputs);
    EXPECT_TRUE(back.labels == d.labels);
    std::stringstream bad("FLAB2xxxxxxxx");
    EXPECT_THROW(read_flab(bad), FormatError);
    std::string truncated = [&] {
        std::stringstream s2;
        write_flab(s2, d);
        return s2.str().substr(0, 30);
    }();
    std::stringstream tr(truncated);
    EXPECT_THROW(read_flab(tr), FormatError);
}
