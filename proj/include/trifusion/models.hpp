#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trifusion/tensor.hpp"

namespace trifusion {

enum class TextTokenization {
    single,       ///< the whole embedding is one token (512 -> d projection)
    per_element,  ///< every embedding entry is its own 1 -> d token
};

/// Every size the two models depend on. The LiDAR image always has 4
/// channels and the bottleneck always 1.
struct ModelDims {
    std::size_t lidar_height = 32;
    std::size_t lidar_width = 32;
    std::size_t views = 6;
    std::size_t image_height = 64;
    std::size_t image_width = 64;
    std::size_t embed_dim = 256;
    std::size_t heads = 4;
    std::size_t text_dim = 512;
    std::size_t depth_patch = 16;
    TextTokenization text_tokens = TextTokenization::single;

    static constexpr std::size_t lidar_channels = 4;
    static constexpr std::size_t image_channels = 3;
    /// Spatial reduction between the LiDAR image and its latent grid.
    static constexpr std::size_t encoder_stride = 4;

    /// Throws ConfigError/DimensionError when the sizes cannot compose.
    void validate() const;

    std::size_t latent_height() const { return lidar_height / encoder_stride; }
    std::size_t latent_width() const { return lidar_width / encoder_stride; }
    std::size_t lidar_tokens() const { return latent_height() * latent_width(); }
    std::size_t depth_tokens_per_view() const {
        return (image_height / depth_patch) * (image_width / depth_patch);
    }
    std::size_t depth_tokens() const { return views * depth_tokens_per_view(); }
    std::size_t text_token_count() const { return text_tokens == TextTokenization::single ? 1 : text_dim; }
    std::size_t head_dim() const { return embed_dim / heads; }

    bool operator==(const ModelDims&) const = default;
};

template <typename T>
struct ConvLayer {
    BasicTensor<T> weight;
    BasicTensor<T> bias;
};

template <typename T>
struct LinearLayer {
    BasicTensor<T> weight;  ///< [in, out]
    BasicTensor<T> bias;    ///< [out]
};

/// Encoder: conv 4->8 (s2), 8->4 (s2), 4->1 (s1). Decoder mirrors it with
/// transposed convs 1->4 (s1), 4->8 (s2), 8->4 (s2).
template <typename T>
struct CnnAeParamsT {
    ConvLayer<T> enc1, enc2, enc3;
    ConvLayer<T> dec1, dec2, dec3;
};

/// Two stride-2 convs down (3->8->16), two transposed convs up (16->8->1).
template <typename T>
struct DepthParamsT {
    ConvLayer<T> down1, down2, up1, up2;
};

template <typename T>
struct EmbedParamsT {
    LinearLayer<T> lidar;  ///< 1 -> d per latent cell
    LinearLayer<T> depth;  ///< patch*patch -> d
    LinearLayer<T> text;   ///< text_dim -> d, or 1 -> d for per-element tokens
    BasicTensor<T> lidar_pos;
    BasicTensor<T> depth_pos;
    BasicTensor<T> text_pos;
};

template <typename T>
struct AttentionStreamT {
    LinearLayer<T> key;
    LinearLayer<T> value;
};

template <typename T>
struct FusionParamsT {
    LinearLayer<T> query;
    AttentionStreamT<T> depth;
    AttentionStreamT<T> text;
    LinearLayer<T> output;
};

template <typename T>
struct TriFusionParamsT {
    CnnAeParamsT<T> lidar_ae;
    DepthParamsT<T> depth;
    EmbedParamsT<T> embed;
    FusionParamsT<T> fusion;
    LinearLayer<T> stage_one;  ///< d -> 1 per LiDAR token
};

using CnnAeParams = CnnAeParamsT<float>;
using DepthParams = DepthParamsT<float>;
using EmbedParams = EmbedParamsT<float>;
using FusionParams = FusionParamsT<float>;
using TriFusionParams = TriFusionParamsT<float>;

/// Fixed mixing weights of the two attention streams.
inline constexpr double kDepthStreamWeight = 0.5;
inline constexpr double kTextStreamWeight = 0.5;

// Uniform(+-1/sqrt(fan_in)) weights, zero biases, N(0, 0.02^2) positional
// tables, all drawn from the weight_init stream of `seed`.
CnnAeParams init_cnn_ae(std::uint64_t seed);
DepthParams init_depth(std::uint64_t seed);
TriFusionParams init_trifusion(const ModelDims& dims, std::uint64_t seed);

/// All-zero parameters with the right shapes.
template <typename T>
CnnAeParamsT<T> zero_cnn_ae();
template <typename T>
DepthParamsT<T> zero_depth();
template <typename T>
TriFusionParamsT<T> zero_trifusion(const ModelDims& dims);

/// Named parameter handles in a stable order. Names are the checkpoint keys.
template <typename T>
using NamedParams = std::vector<std::pair<std::string, BasicTensor<T>*>>;

template <typename T>
NamedParams<T> named_params(CnnAeParamsT<T>& p);
template <typename T>
NamedParams<T> named_params(DepthParamsT<T>& p);
template <typename T>
NamedParams<T> named_params(TriFusionParamsT<T>& p);

/// Copies values between parameter sets of the same layout, converting the
/// scalar type.
template <typename Params, typename Target>
void convert_params(Params& from, Target& to) {
    auto src = named_params(from);
    auto dst = named_params(to);
    if (src.size() != dst.size()) {
        throw ContractError("convert_params: layouts differ");
    }
    for (std::size_t i = 0; i < src.size(); ++i) {
        using U = typename std::remove_reference_t<decltype(*dst[i].second)>::value_type;
        *dst[i].second = src[i].second->template cast<U>();
    }
}

template <typename T>
struct CnnAeOutput {
    BasicTensor<T> latent;  ///< [1, H/4, W/4]
    BasicTensor<T> recon;   ///< [4, H, W]
};

template <typename T>
BasicTensor<T> lidar_encode(const CnnAeParamsT<T>& p, const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> lidar_decode(const CnnAeParamsT<T>& p, const BasicTensor<T>& latent);
template <typename T>
CnnAeOutput<T> cnn_ae_forward(const CnnAeParamsT<T>& p, const BasicTensor<T>& x);

/// [3, H, W] image -> [1, H, W] depth map; H, W divisible by 4.
template <typename T>
BasicTensor<T> depth_forward(const DepthParamsT<T>& p, const BasicTensor<T>& image);

enum class Modality { lidar_latent, depth_map, text_embedding };

/// Projects one modality to [n_tokens, d] and adds its positional table.
/// depth_map takes the depth maps of all views in camera order, each
/// [1, H, W], split into depth_patch x depth_patch patches.
template <typename T>
BasicTensor<T> tokenize(Modality modality, std::span<const BasicTensor<T>> inputs, const EmbedParamsT<T>& embed,
                        const ModelDims& dims);

template <typename T>
BasicTensor<T> tokenize(Modality modality, const BasicTensor<T>& input, const EmbedParamsT<T>& embed,
                        const ModelDims& dims) {
    return tokenize<T>(modality, std::span<const BasicTensor<T>>(&input, 1), embed, dims);
}

/// Multi-head scaled dot-product attention on already projected Q, K, V
/// ([n, d] each); heads are contiguous column blocks, concatenated back.
template <typename T>
BasicTensor<T> multi_head_attention(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v,
                                    std::size_t heads);

enum class AttentionStream { depth, text };

/// LiDAR queries attending to one key/value stream, followed by the shared
/// output projection.
template <typename T>
BasicTensor<T> cross_attention(const BasicTensor<T>& q_tokens, const BasicTensor<T>& kv_tokens,
                               const FusionParamsT<T>& params, AttentionStream stream, std::size_t heads);

/// 0.5 * attn_depth + 0.5 * attn_text.
template <typename T>
BasicTensor<T> fuse(const BasicTensor<T>& attn_depth, const BasicTensor<T>& attn_text);

/// LiDAR [4,H,W], views [3,Hi,Wi] in camera order, text [text_dim] -> [4,H,W].
template <typename T>
BasicTensor<T> trifusion_forward(const TriFusionParamsT<T>& params, const ModelDims& dims,
                                 const BasicTensor<T>& lidar, std::span<const BasicTensor<T>> views,
                                 const BasicTensor<T>& text);

}  // namespace trifusion
