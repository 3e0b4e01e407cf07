#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "fastnn/tensor.hpp"

namespace fastnn {

struct Dataset {
    Tensor images;            // n × c × h × w
    std::vector<int> labels;  // length n
    std::size_t num_classes = 10;
    std::string name, split;

    std::size_t size() const { return labels.size(); }
};

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw LengthError(path + ": truncated header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::vector<unsigned char> read_exact(std::istream& in, std::size_t n, const std::string& path) {
    std::vector<unsigned char> buf(n);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n)))
        throw LengthError(path + ": file shorter than its header promises");
    return buf;
}

}  // namespace detail

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

inline Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw DataMissingError(images_path + ": cannot open");
    const std::uint32_t magic = detail::read_be32(img, images_path);
    if (magic != kIdxImagesMagic)
        throw FormatError(images_path + ": bad image magic " + std::to_string(magic));
    const std::uint32_t n = detail::read_be32(img, images_path);
    const std::uint32_t h = detail::read_be32(img, images_path);
    const std::uint32_t w = detail::read_be32(img, images_path);
    const auto pixels = detail::read_exact(img, std::size_t(n) * h * w, images_path);

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw DataMissingError(labels_path + ": cannot open");
    const std::uint32_t lmagic = detail::read_be32(lab, labels_path);
    if (lmagic != kIdxLabelsMagic)
        throw FormatError(labels_path + ": bad label magic " + std::to_string(lmagic));
    const std::uint32_t ln = detail::read_be32(lab, labels_path);
    const auto bytes = detail::read_exact(lab, ln, labels_path);
    if (n != ln)
        throw ConsistencyError(images_path + ": " + std::to_string(n) + " images vs " + std::to_string(ln) + " labels");

    Dataset ds;
    ds.images = make_tensor({(long long)n, 1, (long long)h, (long long)w});
    for (std::size_t i = 0; i < std::size_t(n) * h; ++i) {
        float* row = ds.images.row_ptr(i);
        const unsigned char* src = pixels.data() + i * w;
        for (std::size_t j = 0; j < w; ++j) row[j] = static_cast<float>(src[j]);
    }
    ds.labels.assign(bytes.begin(), bytes.end());
    ds.name = "mnist";
    return ds;
}

inline void write_mnist_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
    if (ds.images.rank() != 4 || ds.images.dim(1) != 1) throw ShapeError("write_mnist_idx: expected n x 1 x h x w images");
    const std::size_t n = ds.images.dim(0), h = ds.images.dim(2), w = ds.images.dim(3);
    if (n != ds.labels.size()) throw ConsistencyError("write_mnist_idx: image/label count mismatch");
    std::ofstream img(images_path, std::ios::binary);
    detail::write_be32(img, kIdxImagesMagic);
    detail::write_be32(img, static_cast<std::uint32_t>(n));
    detail::write_be32(img, static_cast<std::uint32_t>(h));
    detail::write_be32(img, static_cast<std::uint32_t>(w));
    std::vector<unsigned char> row(w);
    for (std::size_t i = 0; i < n * h; ++i) {
        const float* p = ds.images.row_ptr(i);
        for (std::size_t j = 0; j < w; ++j) row[j] = static_cast<unsigned char>(p[j]);
        img.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(w));
    }
    std::ofstream lab(labels_path, std::ios::binary);
    detail::write_be32(lab, kIdxLabelsMagic);
    detail::write_be32(lab, static_cast<std::uint32_t>(n));
    for (int v : ds.labels) {
        const unsigned char b = static_cast<unsigned char>(v);
        lab.write(reinterpret_cast<const char*>(&b), 1);
    }
}

constexpr std::size_t kCifarRecordBytes = 3073;  // 1 label byte + 3 x 1024 pixel planes

inline Dataset load_cifar10(const std::vector<std::string>& batch_files) {
    Dataset ds;
    ds.name = "cifar10";
    std::vector<unsigned char> all;
    for (const std::string& path : batch_files) {
        std::ifstream in(path, std::ios::binary | std::ios::ate);
        if (!in) throw DataMissingError(path + ": cannot open");
        const std::streamsize len = in.tellg();
        if (len < 0 || std::size_t(len) % kCifarRecordBytes != 0)
            throw FormatError(path + ": size " + std::to_string(len) + " is not a multiple of " +
                              std::to_string(kCifarRecordBytes));
        in.seekg(0);
        const std::size_t off = all.size();
        all.resize(off + std::size_t(len));
        if (!in.read(reinterpret_cast<char*>(all.data() + off), len)) throw LengthError(path + ": short read");
    }
    const std::size_t n = all.size() / kCifarRecordBytes;
    ds.images = make_tensor({(long long)n, 3, 32, 32});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* rec = all.data() + i * kCifarRecordBytes;
        ds.labels[i] = rec[0];
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < 32; ++y) {
                float* row = &ds.images.at(i, c, y, 0);
                const unsigned char* src = rec + 1 + c * 1024 + y * 32;
                for (std::size_t x = 0; x < 32; ++x) row[x] = static_cast<float>(src[x]);
            }
    }
    return ds;
}

inline void write_cifar10(const Dataset& ds, const std::string& path) {
    if (ds.images.rank() != 4 || ds.images.dim(1) != 3 || ds.images.dim(2) != 32 || ds.images.dim(3) != 32)
        throw ShapeError("write_cifar10: expected n x 3 x 32 x 32 images");
    std::ofstream out(path, std::ios::binary);
    std::vector<unsigned char> rec(kCifarRecordBytes);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        rec[0] = static_cast<unsigned char>(ds.labels[i]);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < 32; ++y) {
                const float* row = &ds.images.at(i, c, y, 0);
                for (std::size_t x = 0; x < 32; ++x) rec[1 + c * 1024 + y * 32 + x] = static_cast<unsigned char>(row[x]);
            }
        out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
    }
}

inline Dataset scale_pre(const Dataset& ds, float divisor) {
    if (!(divisor > 0.0f)) throw ParamError("scale_pre: divisor must be > 0");
    Dataset out = ds;
    out.images = ds.images.clone();
    const std::size_t cols = out.images.last_dim();
    for (std::size_t r = 0; r < out.images.rows_total(); ++r) {
        float* p = out.images.row_ptr(r);
        for (std::size_t j = 0; j < cols; ++j) p[j] /= divisor;
    }
    return out;
}

// resolves the dataset cache directory: $FASTNN_DATA_DIR, else ./data
inline std::string data_root() {
    if (const char* env = std::getenv("FASTNN_DATA_DIR")) return env;
    return "data";
}

inline Dataset load_mnist(const std::string& split, const std::string& root = data_root()) {
    const std::string img = split == "train" ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte";
    const std::string lab = split == "train" ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte";
    std::ifstream probe(root + "/" + img, std::ios::binary);
    if (!probe)
        throw DataMissingError("MNIST file " + root + "/" + img +
                               " not found; run `fastnn-bench run` with fetching enabled or place the IDX files under "
                               "$FASTNN_DATA_DIR");
    Dataset ds = load_mnist_idx(root + "/" + img, root + "/" + lab);
    ds.split = split;
    return ds;
}

inline Dataset load_cifar10_split(const std::string& split, const std::string& root = data_root()) {
    std::vector<std::string> files;
    if (split == "train")
        for (int i = 1; i <= 5; ++i) files.push_back(root + "/data_batch_" + std::to_string(i) + ".bin");
    else
        files.push_back(root + "/test_batch.bin");
    std::ifstream probe(files[0], std::ios::binary);
    if (!probe)
        throw DataMissingError("CIFAR-10 file " + files[0] +
                               " not found; run `fastnn-bench run` with fetching enabled or place the binary batches "
                               "under $FASTNN_DATA_DIR");
    Dataset ds = load_cifar10(files);
    ds.split = split;
    return ds;
}

// keeps the first n samples; n = 0 keeps everything
inline Dataset subset(const Dataset& ds, std::size_t n) {
    if (n == 0 || n >= ds.size()) return ds;
    Dataset out;
    out.name = ds.name;
    out.split = ds.split;
    out.num_classes = ds.num_classes;
    out.labels.assign(ds.labels.begin(), ds.labels.begin() + static_cast<long>(n));
    Tensor view = slice_batch(ds.images, 0, n);
    out.images = view.clone();
    return out;
}

struct Batch {
    Tensor x;                         // batch × c × h × w
    Tensor y;                         // batch × classes, one-hot
    std::vector<std::size_t> indices; // source sample index per row
};

class BatchIterator {
  public:
    BatchIterator(const Dataset& ds, std::size_t batch_size, unsigned seed)
        : ds_(&ds), batch_(batch_size), order_(ds.size()) {
        if (batch_size < 1) throw ParamError("batch_iterator: batch_size must be >= 1");
        if (ds.size() == 0) throw DataError("batch_iterator: empty dataset");
        std::iota(order_.begin(), order_.end(), std::size_t(0));
        std::mt19937 rng(seed);
        std::shuffle(order_.begin(), order_.end(), rng);
    }

    void reshuffle(unsigned seed) {
        std::mt19937 rng(seed);
        std::shuffle(order_.begin(), order_.end(), rng);
        pos_ = 0;
    }

    const std::vector<std::size_t>& order() const { return order_; }

    bool next(Batch& out) {
        if (pos_ >= order_.size()) return false;
        const std::size_t count = std::min(batch_, order_.size() - pos_);
        const Tensor& imgs = ds_->images;
        const std::size_t c = imgs.dim(1), h = imgs.dim(2), w = imgs.dim(3);
        out.x = make_tensor({(long long)count, (long long)c, (long long)h, (long long)w});
        out.y = make_tensor({(long long)count, (long long)ds_->num_classes});
        out.indices.assign(order_.begin() + static_cast<long>(pos_), order_.begin() + static_cast<long>(pos_ + count));
        const std::size_t rows_per_item = c * h;
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t src = out.indices[i];
            for (std::size_t r = 0; r < rows_per_item; ++r)
                std::memcpy(out.x.row_ptr(i * rows_per_item + r), imgs.row_ptr(src * rows_per_item + r),
                            w * sizeof(float));
            const int label = ds_->labels[src];
            if (label < 0 || std::size_t(label) >= ds_->num_classes)
                throw ConsistencyError("batch_iterator: label " + std::to_string(label) + " outside [0, " +
                                       std::to_string(ds_->num_classes) + ")");
            out.y.at(i, label) = 1.0f;
        }
        pos_ += count;
        return true;
    }

  private:
    const Dataset* ds_;
    std::size_t batch_, pos_ = 0;
    std::vector<std::size_t> order_;
};

}  // namespace fastnn
