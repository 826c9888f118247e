#ifndef AERO_BINIO_HPP
#define AERO_BINIO_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "aero/errors.hpp"

namespace aero
{

    // Little-endian binary writer; all file formats in this project use it so
    // artifacts are byte-identical across machines.
    class BinWriter
    {
    public:
        explicit BinWriter(const std::string &path)
            : out_(path, std::ios::binary)
        {
            if (!out_)
            {
                throw IoError("cannot open for writing: " + path);
            }
        }

        void u8(uint8_t v) { raw(&v, 1); }

        void u32(uint32_t v)
        {
            uint8_t b[4] = {static_cast<uint8_t>(v),
                            static_cast<uint8_t>(v >> 8),
                            static_cast<uint8_t>(v >> 16),
                            static_cast<uint8_t>(v >> 24)};
            raw(b, 4);
        }

        void u64(uint64_t v)
        {
            u32(static_cast<uint32_t>(v));
            u32(static_cast<uint32_t>(v >> 32));
        }

        void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }

        void f32(float v)
        {
            uint32_t bits;
            std::memcpy(&bits, &v, 4);
            u32(bits);
        }

        void f64(double v)
        {
            uint64_t bits;
            std::memcpy(&bits, &v, 8);
            u64(bits);
        }

        void bytes(const void *p, size_t n) { raw(p, n); }

        void str(const std::string &s)
        {
            u32(static_cast<uint32_t>(s.size()));
            raw(s.data(), s.size());
        }

        void f32vec(const std::vector<float> &v)
        {
            u64(v.size());
            for (float x : v)
            {
                f32(x);
            }
        }

    private:
        void raw(const void *p, size_t n)
        {
            out_.write(static_cast<const char *>(p), static_cast<std::streamsize>(n));
            if (!out_)
            {
                throw IoError("write failed");
            }
        }

        std::ofstream out_;
    };

    class BinReader
    {
    public:
        explicit BinReader(const std::string &path)
            : in_(path, std::ios::binary)
        {
            if (!in_)
            {
                throw IoError("cannot open for reading: " + path);
            }
        }

        uint8_t u8()
        {
            uint8_t v;
            raw(&v, 1);
            return v;
        }

        uint32_t u32()
        {
            uint8_t b[4];
            raw(b, 4);
            return static_cast<uint32_t>(b[0]) |
                   (static_cast<uint32_t>(b[1]) << 8) |
                   (static_cast<uint32_t>(b[2]) << 16) |
                   (static_cast<uint32_t>(b[3]) << 24);
        }

        uint64_t u64()
        {
            const uint64_t lo = u32();
            const uint64_t hi = u32();
            return lo | (hi << 32);
        }

        int32_t i32() { return static_cast<int32_t>(u32()); }

        float f32()
        {
            const uint32_t bits = u32();
            float v;
            std::memcpy(&v, &bits, 4);
            return v;
        }

        double f64()
        {
            const uint64_t bits = u64();
            double v;
            std::memcpy(&v, &bits, 8);
            return v;
        }

        void bytes(void *p, size_t n) { raw(p, n); }

        std::string str()
        {
            const uint32_t n = u32();
            std::string s(n, '\0');
            raw(s.data(), n);
            return s;
        }

        std::vector<float> f32vec()
        {
            const uint64_t n = u64();
            std::vector<float> v(n);
            for (uint64_t i = 0; i < n; ++i)
            {
                v[i] = f32();
            }
            return v;
        }

        bool eof()
        {
            return in_.peek() == std::ifstream::traits_type::eof();
        }

    private:
        void raw(void *p, size_t n)
        {
            in_.read(static_cast<char *>(p), static_cast<std::streamsize>(n));
            if (static_cast<size_t>(in_.gcount()) != n)
            {
                throw IoError("unexpected end of file");
            }
        }

        std::ifstream in_;
    };

    // FNV-1a 64-bit; used for content hashes in manifests and cache keys.
    class Fnv1a
    {
    public:
        Fnv1a() : h_(0xcbf29ce484222325ull) {}

        void add(const void *p, size_t n)
        {
            const uint8_t *b = static_cast<const uint8_t *>(p);
            for (size_t i = 0; i < n; ++i)
            {
                h_ ^= b[i];
                h_ *= 0x100000001b3ull;
            }
        }

        void add(const std::string &s) { add(s.data(), s.size()); }

        void addU64(uint64_t v)
        {
            uint8_t b[8];
            for (int i = 0; i < 8; ++i)
            {
                b[i] = static_cast<uint8_t>(v >> (8 * i));
            }
            add(b, 8);
        }

        void addF64(double v)
        {
            uint64_t bits;
            std::memcpy(&bits, &v, 8);
            addU64(bits);
        }

        uint64_t value() const { return h_; }

        std::string hex() const
        {
            static const char *digits = "0123456789abcdef";
            std::string s(16, '0');
            for (int i = 0; i < 16; ++i)
            {
                s[15 - i] = digits[(h_ >> (4 * i)) & 0xF];
            }
            return s;
        }

    private:
        uint64_t h_;
    };

    inline uint64_t hashFile(const std::string &path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
        {
            throw IoError("cannot open for hashing: " + path);
        }
        Fnv1a h;
        char buf[65536];
        while (in)
        {
            in.read(buf, sizeof(buf));
            h.add(buf, static_cast<size_t>(in.gcount()));
        }
        return h.value();
    }

    inline std::string hashFileHex(const std::string &path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
        {
            throw IoError("cannot open for hashing: " + path);
        }
        Fnv1a h;
        char buf[65536];
        while (in)
        {
            in.read(buf, sizeof(buf));
            h.add(buf, static_cast<size_t>(in.gcount()));
        }
        return h.hex();
    }

} // namespace aero

#endif
