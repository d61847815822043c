#ifndef AMTNN_DATA_HPP
#define AMTNN_DATA_HPP

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "amtnn/errors.hpp"
#include "amtnn/rng.hpp"
#include "amtnn/tensor.hpp"
#include "amtnn/types.hpp"

namespace amtnn {

/// One task: labeled train/test splits plus the label-space size.
struct TaskDataset {
    std::string name;
    LabeledBatch train;
    LabeledBatch test;
    std::size_t num_classes = 0;

    void validate() const {
        if (num_classes < 2) throw ConfigError("TaskDataset " + name + ": num_classes must be >= 2");
        for (const LabeledBatch* split : {&train, &test}) {
            if (split->x.rank() != 2 || split->x.rows() != split->y.size())
                throw ConfigError("TaskDataset " + name + ": feature/label count mismatch");
            for (int y : split->y)
                if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
                    throw ConfigError("TaskDataset " + name + ": label out of range");
        }
    }
};

/// Gaussian mixture benchmark: class c of task t is drawn from
/// N(center_c + shift_t, sigma^2 I). Tasks with equal shift vectors are
/// exact twins of each other's distribution.
struct SyntheticSpec {
    std::size_t tasks = 3;
    std::size_t train_per_task = 200;
    std::size_t test_per_task = 200;
    std::size_t classes = 3;
    std::size_t dim = 8;
    real separation = 3.0;              // spacing of the class centers
    real sigma = 1.0;                   // within-class noise
    std::vector<std::vector<real>> shifts;  // per-task mean shift; empty = all zero
    std::uint64_t seed = 0;

    void validate() const {
        if (tasks < 1) throw ConfigError("SyntheticSpec: tasks must be >= 1");
        if (dim < 2) throw ConfigError("SyntheticSpec: dim must be >= 2");
        if (classes < 2) throw ConfigError("SyntheticSpec: classes must be >= 2");
        if (!(sigma > 0)) throw ConfigError("SyntheticSpec: sigma must be > 0");
        if (train_per_task == 0 || test_per_task == 0)
            throw ConfigError("SyntheticSpec: sample counts must be positive");
        if (!shifts.empty() && shifts.size() != tasks)
            throw ConfigError("SyntheticSpec: one shift vector per task required");
        for (const auto& s : shifts)
            if (s.size() != dim) throw ConfigError("SyntheticSpec: shift width must equal dim");
    }

    /// Center of class c: separation along axis (c mod dim), repeated axes
    /// move further out when classes exceed the dimension.
    std::vector<real> class_center(std::size_t c) const {
        std::vector<real> center(dim, 0);
        center[c % dim] = separation * real(1 + c / dim);
        return center;
    }
};

/// Shift vectors of the given magnitudes along the diagonal direction
/// (1,...,1)/sqrt(dim); a convenient way to configure covariate shift.
inline std::vector<std::vector<real>> diagonal_shifts(std::size_t dim,
                                                      const std::vector<real>& magnitudes) {
    std::vector<std::vector<real>> out;
    real unit = real(1) / std::sqrt(real(dim));
    for (real m : magnitudes) out.emplace_back(dim, m * unit);
    return out;
}

inline std::vector<TaskDataset> gen_synthetic_tasks(const SyntheticSpec& spec) {
    spec.validate();
    std::vector<TaskDataset> out;
    for (std::size_t t = 0; t < spec.tasks; ++t) {
        TaskDataset ds;
        ds.name = "synthetic-" + std::to_string(t);
        ds.num_classes = spec.classes;
        auto fill = [&](LabeledBatch& split, std::size_t n, std::uint64_t tag) {
            Rng rng(mix_seed(spec.seed, 0x73796eULL, t, tag));
            split.x = Tensor({n, spec.dim});
            split.y.resize(n);
            for (std::size_t j = 0; j < n; ++j) {
                std::size_t c = j % spec.classes;  // balanced labels
                split.y[j] = static_cast<int>(c);
                std::vector<real> center = spec.class_center(c);
                for (std::size_t k = 0; k < spec.dim; ++k) {
                    real shift = spec.shifts.empty() ? real(0) : spec.shifts[t][k];
                    split.x.at(j, k) =
                        center[k] + shift + spec.sigma * static_cast<real>(rng.normal());
                }
            }
        };
        fill(ds.train, spec.train_per_task, 1);
        fill(ds.test, spec.test_per_task, 2);
        ds.validate();
        out.push_back(std::move(ds));
    }
    return out;
}

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw IoError(path + ": truncated header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

}  // namespace detail

struct IdxDims {
    std::size_t rows = 0, cols = 0;
};

/// Parses the big-endian IDX pair used by the digit datasets: images with
/// magic 0x00000803 (u8, count x rows x cols) and labels with magic
/// 0x00000801. Pixels scale to [0,1] and rows flatten.
inline LabeledBatch load_idx(const std::string& images_path, const std::string& labels_path,
                             IdxDims* dims_out = nullptr) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IoError(images_path + ": cannot open");
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError(labels_path + ": cannot open");

    std::uint32_t magic = detail::read_be32(img, images_path);
    if (magic != 0x00000803u) {
        std::ostringstream os;
        os << images_path << ": bad image magic 0x" << std::hex << magic;
        throw IoError(os.str());
    }
    std::uint32_t count = detail::read_be32(img, images_path);
    std::uint32_t rows = detail::read_be32(img, images_path);
    std::uint32_t cols = detail::read_be32(img, images_path);

    std::uint32_t lmagic = detail::read_be32(lab, labels_path);
    if (lmagic != 0x00000801u) {
        std::ostringstream os;
        os << labels_path << ": bad label magic 0x" << std::hex << lmagic;
        throw IoError(os.str());
    }
    std::uint32_t lcount = detail::read_be32(lab, labels_path);
    if (count != lcount)
        throw IoError(images_path + ": image count " + std::to_string(count) +
                      " does not match label count " + std::to_string(lcount));

    if (dims_out) *dims_out = {rows, cols};
    std::size_t pixels = std::size_t(rows) * cols;
    std::vector<unsigned char> buf(pixels);
    LabeledBatch out;
    out.x = Tensor({count, pixels});
    out.y.resize(count);
    for (std::uint32_t n = 0; n < count; ++n) {
        if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels)))
            throw IoError(images_path + ": truncated at image " + std::to_string(n));
        for (std::size_t k = 0; k < pixels; ++k) out.x.at(n, k) = real(buf[k]) / real(255);
        char yb;
        if (!lab.read(&yb, 1)) throw IoError(labels_path + ": truncated at label " + std::to_string(n));
        out.y[n] = static_cast<int>(static_cast<unsigned char>(yb));
    }
    return out;
}

/// 2x2 mean pooling of flattened images; rows and cols must be even.
inline Tensor downscale_2x2(const Tensor& x, std::size_t rows, std::size_t cols) {
    if (x.rank() != 2 || x.cols() != rows * cols)
        throw ShapeError("downscale_2x2: width does not match rows*cols");
    if (rows % 2 != 0 || cols % 2 != 0) throw ShapeError("downscale_2x2: odd image extent");
    std::size_t hr = rows / 2, hc = cols / 2;
    Tensor out({x.rows(), hr * hc});
    for (std::size_t n = 0; n < x.rows(); ++n)
        for (std::size_t r = 0; r < hr; ++r)
            for (std::size_t c = 0; c < hc; ++c) {
                real s = x.at(n, (2 * r) * cols + 2 * c) + x.at(n, (2 * r) * cols + 2 * c + 1) +
                         x.at(n, (2 * r + 1) * cols + 2 * c) + x.at(n, (2 * r + 1) * cols + 2 * c + 1);
                out.at(n, r * hc + c) = s / real(4);
            }
    return out;
}

/// Parses the sparse text format "label idx:val idx:val ..." with 0-based
/// indices below dim; rows materialize densely. Malformed lines report their
/// line number.
inline LabeledBatch load_sparse_bow(const std::string& path, std::size_t dim) {
    std::ifstream in(path);
    if (!in) throw IoError(path + ": cannot open");
    if (dim == 0) throw ConfigError("load_sparse_bow: dim must be positive");

    std::vector<std::vector<real>> rows;
    std::vector<int> labels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        auto fail = [&](const std::string& msg) {
            throw IoError(path + ":" + std::to_string(lineno) + ": " + msg);
        };
        long label;
        if (!(ls >> label) || label < 0) fail("expected a nonnegative integer label");
        std::vector<real> row(dim, 0);
        std::string tok;
        while (ls >> tok) {
            std::size_t colon = tok.find(':');
            if (colon == std::string::npos) fail("expected idx:val, got '" + tok + "'");
            std::size_t idx;
            double val;
            try {
                idx = std::stoul(tok.substr(0, colon));
                val = std::stod(tok.substr(colon + 1));
            } catch (const std::exception&) {
                fail("cannot parse feature '" + tok + "'");
                return {};  // unreachable
            }
            if (idx >= dim)
                fail("feature index " + std::to_string(idx) + " exceeds dim " + std::to_string(dim));
            row[idx] = static_cast<real>(val);
        }
        rows.push_back(std::move(row));
        labels.push_back(static_cast<int>(label));
    }

    LabeledBatch out;
    out.x = Tensor({rows.size(), dim});
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < dim; ++c) out.x.at(r, c) = rows[r][c];
    out.y = std::move(labels);
    return out;
}

/// Seeded uniform subsample of the training split, without replacement; the
/// test split is untouched.
inline TaskDataset subsample(const TaskDataset& ds, std::size_t n, std::uint64_t seed) {
    if (n > ds.train.size())
        throw ConfigError("subsample: requested " + std::to_string(n) + " of " +
                          std::to_string(ds.train.size()) + " samples");
    Rng rng(mix_seed(seed, 0x737562ULL));
    std::vector<std::size_t> pick = rng.sample_without_replacement(ds.train.size(), n);
    TaskDataset out;
    out.name = ds.name;
    out.num_classes = ds.num_classes;
    out.test = ds.test;
    std::size_t d = ds.train.x.cols();
    out.train.x = Tensor({n, d});
    out.train.y.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t c = 0; c < d; ++c) out.train.x.at(j, c) = ds.train.x.at(pick[j], c);
        out.train.y[j] = ds.train.y[pick[j]];
    }
    return out;
}

/// One epoch's minibatches: a seeded shuffle cut into batch_size pieces, the
/// short remainder kept.
inline std::vector<LabeledBatch> minibatches(const LabeledBatch& data, std::size_t batch_size,
                                             std::uint64_t seed, std::size_t epoch,
                                             std::size_t cycle = 0, std::size_t task_tag = 0) {
    if (batch_size == 0) throw ConfigError("minibatches: batch_size must be >= 1");
    std::size_t n = data.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(mix_seed(seed, 0x626174ULL, task_tag, epoch, cycle));
    rng.shuffle(order);

    std::vector<LabeledBatch> out;
    std::size_t d = data.x.cols();
    for (std::size_t start = 0; start < n; start += batch_size) {
        std::size_t len = std::min(batch_size, n - start);
        LabeledBatch b;
        b.x = Tensor({len, d});
        b.y.resize(len);
        for (std::size_t j = 0; j < len; ++j) {
            for (std::size_t c = 0; c < d; ++c) b.x.at(j, c) = data.x.at(order[start + j], c);
            b.y[j] = data.y[order[start + j]];
        }
        out.push_back(std::move(b));
    }
    return out;
}

/// Cycling minibatch source for task-length alignment: when one task's epoch
/// sequence runs out before the longest task finishes, it reshuffles and
/// keeps going.
class BatchStream {
public:
    BatchStream(const LabeledBatch& data, std::size_t batch_size, std::uint64_t seed,
                std::size_t task_tag)
        : data_(&data), batch_size_(batch_size), seed_(seed), task_tag_(task_tag) {}

    void start_epoch(std::size_t epoch) {
        epoch_ = epoch;
        cycle_ = 0;
        queue_ = minibatches(*data_, batch_size_, seed_, epoch_, cycle_, task_tag_);
        next_ = 0;
    }

    LabeledBatch next() {
        if (next_ >= queue_.size()) {
            ++cycle_;
            queue_ = minibatches(*data_, batch_size_, seed_, epoch_, cycle_, task_tag_);
            next_ = 0;
        }
        return queue_[next_++];
    }

    std::size_t batches_per_epoch() const {
        return (data_->size() + batch_size_ - 1) / batch_size_;
    }

private:
    const LabeledBatch* data_;
    std::size_t batch_size_;
    std::uint64_t seed_;
    std::size_t task_tag_;
    std::size_t epoch_ = 0;
    std::size_t cycle_ = 0;
    std::vector<LabeledBatch> queue_;
    std::size_t next_ = 0;
};

}  // namespace amtnn

#endif  // AMTNN_DATA_HPP
