#pragma once

// SHA-256 content digests for the artifact manifest.

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>

namespace afcsim::digest {

inline std::string to_hex(const unsigned char* data, unsigned int n)
{
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * n);
    for (unsigned int i = 0; i < n; ++i) {
        out.push_back(hex[data[i] >> 4]);
        out.push_back(hex[data[i] & 0xf]);
    }
    return out;
}

class Sha256
{
public:
    Sha256() : m_ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free)
    {
        if (!m_ctx || EVP_DigestInit_ex(m_ctx.get(), EVP_sha256(), nullptr) != 1) {
            throw std::runtime_error("sha256: initialization failed");
        }
    }

    void update(const void* data, std::size_t n)
    {
        if (EVP_DigestUpdate(m_ctx.get(), data, n) != 1) {
            throw std::runtime_error("sha256: update failed");
        }
    }

    std::string hex()
    {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int n = 0;
        if (EVP_DigestFinal_ex(m_ctx.get(), md.data(), &n) != 1) {
            throw std::runtime_error("sha256: finalization failed");
        }
        return to_hex(md.data(), n);
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> m_ctx;
};

inline std::string sha256_hex(const std::string& data)
{
    Sha256 h;
    h.update(data.data(), data.size());
    return h.hex();
}

inline std::string sha256_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("sha256: cannot open " + path);
    }
    Sha256 h;
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

} // namespace afcsim::digest
