#pragma once

// Download-and-cache helper for the benchmark datasets. Pulls in httplib,
// OpenSSL and zlib; link the fastnn_fetch target to use this header.

#include <openssl/evp.h>
#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "fastnn/data.hpp"
#include "httplib.h"

namespace fastnn {

namespace detail {

inline std::string md5_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_md5(), nullptr);
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) {
        char buf[3];
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

inline std::string http_get(const std::string& host, const std::string& path) {
    httplib::SSLClient cli(host);
    cli.set_follow_location(true);
    cli.set_read_timeout(120, 0);
    auto res = cli.Get(path.c_str());
    if (!res || res->status != 200)
        throw DataMissingError("download failed: https://" + host + path +
                               (res ? " (status " + std::to_string(res->status) + ")" : " (no response)"));
    return res->body;
}

inline std::string gunzip(const std::string& gz) {
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw FormatError("gunzip: inflateInit2 failed");
    std::string out;
    std::vector<char> buf(1 << 16);
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(gz.data()));
    zs.avail_in = static_cast<uInt>(gz.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = reinterpret_cast<Bytef*>(buf.data());
        zs.avail_out = static_cast<uInt>(buf.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw FormatError("gunzip: corrupt stream (rc " + std::to_string(rc) + ")");
        }
        out.append(buf.data(), buf.size() - zs.avail_out);
    }
    inflateEnd(&zs);
    return out;
}

// extracts regular files from a ustar archive, keyed by basename
inline std::map<std::string, std::string> untar(const std::string& tar) {
    std::map<std::string, std::string> files;
    std::size_t off = 0;
    while (off + 512 <= tar.size()) {
        const char* hdr = tar.data() + off;
        if (hdr[0] == '\0') break;  // end-of-archive blocks
        std::string name(hdr, strnlen(hdr, 100));
        std::size_t size = 0;
        for (int i = 124; i < 136 && hdr[i]; ++i)
            if (hdr[i] >= '0' && hdr[i] <= '7') size = size * 8 + std::size_t(hdr[i] - '0');
        const char type = hdr[156];
        off += 512;
        if (type == '0' || type == '\0') {
            if (off + size > tar.size()) throw FormatError("untar: truncated archive");
            const std::size_t slash = name.rfind('/');
            files[slash == std::string::npos ? name : name.substr(slash + 1)] = tar.substr(off, size);
        }
        off += (size + 511) / 512 * 512;
    }
    return files;
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataMissingError(path + ": cannot write");
}

inline bool file_exists(const std::string& path) { return std::ifstream(path, std::ios::binary).good(); }

inline std::string fetch_checked(const std::string& host, const std::string& path, const std::string& md5) {
    const std::string body = http_get(host, path);
    const std::string got = md5_hex(body);
    if (got != md5) throw FormatError("checksum mismatch for " + path + ": got " + got + ", want " + md5);
    return body;
}

}  // namespace detail

// downloads and unpacks the four MNIST IDX files into root when absent
inline void ensure_mnist(const std::string& root = data_root()) {
    static const struct {
        const char* file;
        const char* md5;  // checksum of the .gz archive
    } kFiles[] = {
        {"train-images-idx3-ubyte", "f68b3c2dcbeaaa9fbdd348bbdeb94873"},
        {"train-labels-idx1-ubyte", "d53e105ee54ea40749a09fcbcd1e9432"},
        {"t10k-images-idx3-ubyte", "9fb629c4189551a2d022fa330f9573f3"},
        {"t10k-labels-idx1-ubyte", "ec29112dd5afa0611ce80d1b7f02629c"},
    };
    for (const auto& f : kFiles) {
        const std::string target = root + "/" + f.file;
        if (detail::file_exists(target)) continue;
        const std::string gz =
            detail::fetch_checked("ossci-datasets.s3.amazonaws.com", std::string("/mnist/") + f.file + ".gz", f.md5);
        detail::write_file(target, detail::gunzip(gz));
    }
}

// downloads and unpacks the six CIFAR-10 binary batches into root when absent
inline void ensure_cifar10(const std::string& root = data_root()) {
    std::vector<std::string> names;
    for (int i = 1; i <= 5; ++i) names.push_back("data_batch_" + std::to_string(i) + ".bin");
    names.push_back("test_batch.bin");
    bool all = true;
    for (const std::string& n : names) all = all && detail::file_exists(root + "/" + n);
    if (all) return;
    const std::string tgz = detail::fetch_checked("www.cs.toronto.edu", "/~kriz/cifar-10-binary.tar.gz",
                                                  "c32a1d4ab5d03f1284b67883e8d87530");
    const auto files = detail::untar(detail::gunzip(tgz));
    for (const std::string& n : names) {
        const auto it = files.find(n);
        if (it == files.end()) throw FormatError("cifar-10 archive is missing " + n);
        detail::write_file(root + "/" + n, it->second);
    }
}

}  // namespace fastnn
