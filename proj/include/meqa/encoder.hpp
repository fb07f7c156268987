#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meqa/image.hpp"

namespace meqa {

// Unified text/image encoder: deterministic unit vectors of a fixed dimension.
class Encoder {
public:
    virtual ~Encoder() = default;
    virtual int dim() const = 0;
    virtual std::vector<float> encode_text(const std::string& text) const = 0;
    virtual std::vector<float> encode_image(const RgbImage& image) const = 0;
};

// Lowercased alphanumeric tokens; plural 's' is kept (see MockEncoder for folding).
std::vector<std::string> tokenize(const std::string& text);

// Deterministic stand-in for a CLIP-style encoder.
//
// hash:     every token maps to a seeded Gaussian direction; images map through
//           a seeded random projection of an 8x6 grayscale thumbnail.
// semantic: gridworld vocabulary (palette colors, object categories, room words,
//           attributes) maps to orthogonal basis vectors shared by text and
//           images, so "red sofa" is close to a view containing a red sofa.
//           Other tokens keep small hashed directions; stopwords are dropped.
class MockEncoder : public Encoder {
public:
    enum class Mode { hash, semantic };

    MockEncoder(int dim = 768, Mode mode = Mode::semantic, std::uint64_t seed = 42);

    int dim() const override { return dim_; }
    Mode mode() const { return mode_; }
    std::vector<float> encode_text(const std::string& text) const override;
    std::vector<float> encode_image(const RgbImage& image) const override;

    static Mode parse_mode(const std::string& name);

private:
    std::vector<double> token_vector(const std::string& token) const;
    std::vector<double> hashed_direction(std::uint64_t key) const;

    int dim_;
    Mode mode_;
    std::uint64_t seed_;
    std::vector<std::vector<double>> thumb_dirs_;
};

std::uint64_t fnv1a64(const std::string& s);
std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace meqa
