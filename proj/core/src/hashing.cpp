#include "dgmnet/hashing.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <vector>

#include <openssl/evp.h>

#include "dgmnet/errors.hpp"

namespace dgmnet {

namespace {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
            throw Error("SHA-256 initialisation failed");
        }
    }

    void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }

    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx_.get(), md.data(), &len);
        std::string out;
        char buf[3];
        for (unsigned int i = 0; i < len; ++i) {
            std::snprintf(buf, sizeof(buf), "%02x", md[i]);
            out += buf;
        }
        return out;
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

void hash_tensor(Sha256& h, const std::string& name, const nn::Tensor& t) {
    h.update(name.data(), name.size());
    const nn::Shape& s = t.shape();
    const std::uint64_t dims[4] = {s.n, s.c, s.h, s.w};
    h.update(dims, sizeof(dims));
    h.update(t.data(), t.size() * sizeof(float));
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    Sha256 h;
    h.update(bytes.data(), bytes.size());
    return h.hex();
}

std::string sha256_hex(std::string_view text) {
    Sha256 h;
    h.update(text.data(), text.size());
    return h.hex();
}

std::string sha256_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(path, "cannot open file for hashing");
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    Sha256 h;
    h.update(bytes.data(), bytes.size());
    return h.hex();
}

std::string state_hash(nn::Network& net, const std::string& prefix) {
    Sha256 h;
    for (const auto& [name, p] : net.named_parameters()) {
        if (name.starts_with(prefix)) hash_tensor(h, name, p->value);
    }
    for (const auto& [name, t] : net.named_buffers()) {
        if (name.starts_with(prefix)) hash_tensor(h, name, *t);
    }
    return h.hex();
}

}  // namespace dgmnet
