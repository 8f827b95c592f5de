#include "trifusion/models.hpp"

#include <cmath>

#include "trifusion/ops.hpp"
#include "trifusion/random.hpp"

namespace trifusion {

void ModelDims::validate() const {
    if (lidar_height == 0 || lidar_width == 0 || lidar_height % encoder_stride != 0 ||
        lidar_width % encoder_stride != 0) {
        throw DimensionError("LiDAR grid " + std::to_string(lidar_height) + "x" + std::to_string(lidar_width) +
                             " must be divisible by " + std::to_string(encoder_stride));
    }
    if (views == 0) {
        throw ConfigError("at least one camera view is required");
    }
    if (depth_patch == 0 || image_height == 0 || image_width == 0 || image_height % depth_patch != 0 ||
        image_width % depth_patch != 0 || depth_patch % 4 != 0) {
        throw DimensionError("image " + std::to_string(image_height) + "x" + std::to_string(image_width) +
                             " must be divisible by the depth patch size " + std::to_string(depth_patch) +
                             " (itself a multiple of 4)");
    }
    if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0) {
        throw ConfigError("head count " + std::to_string(heads) + " must divide embedding dimension " +
                          std::to_string(embed_dim));
    }
    if (text_dim == 0) {
        throw ConfigError("text embedding dimension must be positive");
    }
}

namespace {

struct ConvSpec {
    std::size_t in, out, kernel, stride, padding;
    bool transpose;
};

constexpr ConvSpec kEnc1{4, 8, 3, 2, 1, false};
constexpr ConvSpec kEnc2{8, 4, 3, 2, 1, false};
constexpr ConvSpec kEnc3{4, 1, 3, 1, 1, false};
constexpr ConvSpec kDec1{1, 4, 3, 1, 1, true};
constexpr ConvSpec kDec2{4, 8, 4, 2, 1, true};
constexpr ConvSpec kDec3{8, 4, 4, 2, 1, true};

constexpr ConvSpec kDepthDown1{3, 8, 3, 2, 1, false};
constexpr ConvSpec kDepthDown2{8, 16, 3, 2, 1, false};
constexpr ConvSpec kDepthUp1{16, 8, 4, 2, 1, true};
constexpr ConvSpec kDepthUp2{8, 1, 4, 2, 1, true};

Shape weight_shape(const ConvSpec& s) {
    return s.transpose ? Shape{s.in, s.out, s.kernel, s.kernel} : Shape{s.out, s.in, s.kernel, s.kernel};
}

// Number of inputs feeding one output value.
std::size_t fan_in(const ConvSpec& s) {
    if (!s.transpose) {
        return s.in * s.kernel * s.kernel;
    }
    const std::size_t taps = std::max<std::size_t>(1, s.kernel / s.stride);
    return s.in * taps * taps;
}

template <typename T>
ConvLayer<T> zero_conv(const ConvSpec& s) {
    return {BasicTensor<T>(weight_shape(s)), BasicTensor<T>({s.out})};
}

template <typename T>
LinearLayer<T> zero_linear(std::size_t in, std::size_t out) {
    return {BasicTensor<T>({in, out}), BasicTensor<T>({out})};
}

void fill_uniform(Tensor& t, Rng& rng, std::size_t fan) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan));
    rng.fill_uniform(t.mutable_data(), -bound, bound);
}

void init_conv(ConvLayer<float>& layer, const ConvSpec& s, Rng& rng) { fill_uniform(layer.weight, rng, fan_in(s)); }

void init_linear(LinearLayer<float>& layer, Rng& rng) { fill_uniform(layer.weight, rng, layer.weight.dim(0)); }

template <typename T>
BasicTensor<T> apply(const ConvLayer<T>& layer, const ConvSpec& s, const BasicTensor<T>& x) {
    auto y = s.transpose ? conv2d_transpose(x, layer.weight, s.stride, s.padding)
                         : conv2d(x, layer.weight, s.stride, s.padding);
    return add_bias(y, layer.bias, 0);
}

template <typename T>
BasicTensor<T> apply(const LinearLayer<T>& layer, const BasicTensor<T>& x) {
    return add_bias(matmul(x, layer.weight), layer.bias, 1);
}

template <typename T>
void append(NamedParams<T>& out, const std::string& name, ConvLayer<T>& layer) {
    out.emplace_back(name + ".weight", &layer.weight);
    out.emplace_back(name + ".bias", &layer.bias);
}

template <typename T>
void append(NamedParams<T>& out, const std::string& name, LinearLayer<T>& layer) {
    out.emplace_back(name + ".weight", &layer.weight);
    out.emplace_back(name + ".bias", &layer.bias);
}

template <typename T>
void require_shape(const char* what, const BasicTensor<T>& x, const Shape& expected) {
    if (x.shape() != expected) {
        throw DimensionError(std::string(what) + ": expected " + shape_string(expected) + ", got " +
                             shape_string(x.shape()));
    }
}

}  // namespace

template <typename T>
CnnAeParamsT<T> zero_cnn_ae() {
    return {zero_conv<T>(kEnc1), zero_conv<T>(kEnc2), zero_conv<T>(kEnc3),
            zero_conv<T>(kDec1), zero_conv<T>(kDec2), zero_conv<T>(kDec3)};
}

template <typename T>
DepthParamsT<T> zero_depth() {
    return {zero_conv<T>(kDepthDown1), zero_conv<T>(kDepthDown2), zero_conv<T>(kDepthUp1), zero_conv<T>(kDepthUp2)};
}

template <typename T>
TriFusionParamsT<T> zero_trifusion(const ModelDims& dims) {
    dims.validate();
    const std::size_t d = dims.embed_dim;
    const std::size_t patch = dims.depth_patch * dims.depth_patch;
    const std::size_t text_in = dims.text_tokens == TextTokenization::single ? dims.text_dim : 1;
    TriFusionParamsT<T> p;
    p.lidar_ae = zero_cnn_ae<T>();
    p.depth = zero_depth<T>();
    p.embed.lidar = zero_linear<T>(1, d);
    p.embed.depth = zero_linear<T>(patch, d);
    p.embed.text = zero_linear<T>(text_in, d);
    p.embed.lidar_pos = BasicTensor<T>({dims.lidar_tokens(), d});
    p.embed.depth_pos = BasicTensor<T>({dims.depth_tokens(), d});
    p.embed.text_pos = BasicTensor<T>({dims.text_token_count(), d});
    p.fusion.query = zero_linear<T>(d, d);
    p.fusion.depth = {zero_linear<T>(d, d), zero_linear<T>(d, d)};
    p.fusion.text = {zero_linear<T>(d, d), zero_linear<T>(d, d)};
    p.fusion.output = zero_linear<T>(d, d);
    p.stage_one = zero_linear<T>(d, 1);
    return p;
}

CnnAeParams init_cnn_ae(std::uint64_t seed) {
    Rng rng(seed, StreamPurpose::weight_init, 0);
    auto p = zero_cnn_ae<float>();
    init_conv(p.enc1, kEnc1, rng);
    init_conv(p.enc2, kEnc2, rng);
    init_conv(p.enc3, kEnc3, rng);
    init_conv(p.dec1, kDec1, rng);
    init_conv(p.dec2, kDec2, rng);
    init_conv(p.dec3, kDec3, rng);
    return p;
}

DepthParams init_depth(std::uint64_t seed) {
    Rng rng(seed, StreamPurpose::weight_init, 1);
    auto p = zero_depth<float>();
    init_conv(p.down1, kDepthDown1, rng);
    init_conv(p.down2, kDepthDown2, rng);
    init_conv(p.up1, kDepthUp1, rng);
    init_conv(p.up2, kDepthUp2, rng);
    return p;
}

TriFusionParams init_trifusion(const ModelDims& dims, std::uint64_t seed) {
    auto p = zero_trifusion<float>(dims);
    // The LiDAR autoencoder uses the same stream as the standalone baseline so
    // both models start from identical encoder/decoder weights.
    p.lidar_ae = init_cnn_ae(seed);
    p.depth = init_depth(seed);
    Rng rng(seed, StreamPurpose::weight_init, 2);
    init_linear(p.embed.lidar, rng);
    init_linear(p.embed.depth, rng);
    init_linear(p.embed.text, rng);
    rng.fill_normal(p.embed.lidar_pos.mutable_data(), 0.0, 0.02);
    rng.fill_normal(p.embed.depth_pos.mutable_data(), 0.0, 0.02);
    rng.fill_normal(p.embed.text_pos.mutable_data(), 0.0, 0.02);
    init_linear(p.fusion.query, rng);
    init_linear(p.fusion.depth.key, rng);
    init_linear(p.fusion.depth.value, rng);
    init_linear(p.fusion.text.key, rng);
    init_linear(p.fusion.text.value, rng);
    init_linear(p.fusion.output, rng);
    init_linear(p.stage_one, rng);
    return p;
}

template <typename T>
NamedParams<T> named_params(CnnAeParamsT<T>& p) {
    NamedParams<T> out;
    append(out, "enc1", p.enc1);
    append(out, "enc2", p.enc2);
    append(out, "enc3", p.enc3);
    append(out, "dec1", p.dec1);
    append(out, "dec2", p.dec2);
    append(out, "dec3", p.dec3);
    return out;
}

template <typename T>
NamedParams<T> named_params(DepthParamsT<T>& p) {
    NamedParams<T> out;
    append(out, "down1", p.down1);
    append(out, "down2", p.down2);
    append(out, "up1", p.up1);
    append(out, "up2", p.up2);
    return out;
}

template <typename T>
NamedParams<T> named_params(TriFusionParamsT<T>& p) {
    NamedParams<T> out;
    for (auto& [name, t] : named_params(p.lidar_ae)) {
        out.emplace_back("lidar_ae." + name, t);
    }
    for (auto& [name, t] : named_params(p.depth)) {
        out.emplace_back("depth." + name, t);
    }
    append(out, "embed.lidar", p.embed.lidar);
    append(out, "embed.depth", p.embed.depth);
    append(out, "embed.text", p.embed.text);
    out.emplace_back("embed.lidar_pos", &p.embed.lidar_pos);
    out.emplace_back("embed.depth_pos", &p.embed.depth_pos);
    out.emplace_back("embed.text_pos", &p.embed.text_pos);
    append(out, "fusion.query", p.fusion.query);
    append(out, "fusion.depth.key", p.fusion.depth.key);
    append(out, "fusion.depth.value", p.fusion.depth.value);
    append(out, "fusion.text.key", p.fusion.text.key);
    append(out, "fusion.text.value", p.fusion.text.value);
    append(out, "fusion.output", p.fusion.output);
    append(out, "stage_one", p.stage_one);
    return out;
}

template <typename T>
BasicTensor<T> lidar_encode(const CnnAeParamsT<T>& p, const BasicTensor<T>& x) {
    if (x.rank() != 3 || x.dim(0) != ModelDims::lidar_channels) {
        throw DimensionError("LiDAR input must be [4,H,W], got " + shape_string(x.shape()));
    }
    if (x.dim(1) % ModelDims::encoder_stride != 0 || x.dim(2) % ModelDims::encoder_stride != 0) {
        throw DimensionError("LiDAR grid " + shape_string(x.shape()) + " is not divisible by 4");
    }
    auto h = relu(apply(p.enc1, kEnc1, x));
    h = relu(apply(p.enc2, kEnc2, h));
    return apply(p.enc3, kEnc3, h);
}

template <typename T>
BasicTensor<T> lidar_decode(const CnnAeParamsT<T>& p, const BasicTensor<T>& latent) {
    if (latent.rank() != 3 || latent.dim(0) != 1) {
        throw DimensionError("latent must be [1,h,w], got " + shape_string(latent.shape()));
    }
    auto h = relu(apply(p.dec1, kDec1, latent));
    h = relu(apply(p.dec2, kDec2, h));
    return apply(p.dec3, kDec3, h);
}

template <typename T>
CnnAeOutput<T> cnn_ae_forward(const CnnAeParamsT<T>& p, const BasicTensor<T>& x) {
    auto latent = lidar_encode(p, x);
    auto recon = lidar_decode(p, latent);
    return {std::move(latent), std::move(recon)};
}

template <typename T>
BasicTensor<T> depth_forward(const DepthParamsT<T>& p, const BasicTensor<T>& image) {
    if (image.rank() != 3 || image.dim(0) != ModelDims::image_channels) {
        throw DimensionError("image must be [3,H,W], got " + shape_string(image.shape()));
    }
    if (image.dim(1) % 4 != 0 || image.dim(2) % 4 != 0) {
        throw DimensionError("image " + shape_string(image.shape()) + " is not divisible by 4");
    }
    auto h = relu(apply(p.down1, kDepthDown1, image));
    h = relu(apply(p.down2, kDepthDown2, h));
    h = relu(apply(p.up1, kDepthUp1, h));
    return apply(p.up2, kDepthUp2, h);
}

template <typename T>
BasicTensor<T> tokenize(Modality modality, std::span<const BasicTensor<T>> inputs, const EmbedParamsT<T>& embed,
                        const ModelDims& dims) {
    BasicTensor<T> tokens;
    const BasicTensor<T>* pos = nullptr;
    switch (modality) {
        case Modality::lidar_latent: {
            if (inputs.size() != 1 || inputs[0].rank() != 3 || inputs[0].dim(0) != 1) {
                throw DimensionError("lidar_latent tokenization expects one [1,h,w] map");
            }
            const auto& z = inputs[0];
            tokens = apply(embed.lidar, reshape(z, {z.dim(1) * z.dim(2), 1}));
            pos = &embed.lidar_pos;
            break;
        }
        case Modality::depth_map: {
            const std::size_t p = dims.depth_patch;
            std::vector<BasicTensor<T>> patches;
            for (const auto& m : inputs) {
                if (m.rank() != 3 || m.dim(0) != 1 || m.dim(1) % p != 0 || m.dim(2) % p != 0) {
                    throw DimensionError("depth map " + shape_string(m.shape()) + " cannot be split into " +
                                         std::to_string(p) + "x" + std::to_string(p) + " patches");
                }
                const std::size_t gh = m.dim(1) / p, gw = m.dim(2) / p;
                auto grid = transpose(reshape(m, {gh, p, gw, p}), {0, 2, 1, 3});
                patches.push_back(reshape(grid, {gh * gw, p * p}));
            }
            if (patches.empty()) {
                throw DimensionError("depth_map tokenization needs at least one view");
            }
            tokens = apply(embed.depth, patches.size() == 1 ? patches[0] : concat(patches, 0));
            pos = &embed.depth_pos;
            break;
        }
        case Modality::text_embedding: {
            if (inputs.size() != 1 || inputs[0].size() != dims.text_dim) {
                throw DimensionError("text embedding must have " + std::to_string(dims.text_dim) + " entries");
            }
            const Shape shape = dims.text_tokens == TextTokenization::single ? Shape{1, dims.text_dim}
                                                                             : Shape{dims.text_dim, 1};
            tokens = apply(embed.text, reshape(inputs[0], shape));
            pos = &embed.text_pos;
            break;
        }
    }
    // Tables are indexed by token position, so fewer views use a prefix.
    if (pos->rank() != 2 || pos->dim(1) != tokens.dim(1) || pos->dim(0) < tokens.dim(0)) {
        throw DimensionError("positional table " + shape_string(pos->shape()) + " cannot cover tokens " +
                             shape_string(tokens.shape()));
    }
    return add(tokens, pos->dim(0) == tokens.dim(0) ? *pos : slice(*pos, 0, 0, tokens.dim(0)));
}

template <typename T>
BasicTensor<T> multi_head_attention(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v,
                                    std::size_t heads) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || k.shape() != v.shape() || q.dim(1) != k.dim(1)) {
        throw DimensionError("attention: incompatible Q " + shape_string(q.shape()) + ", K " +
                             shape_string(k.shape()) + ", V " + shape_string(v.shape()));
    }
    const std::size_t d = q.dim(1);
    if (heads == 0 || d % heads != 0) {
        throw ConfigError("head count " + std::to_string(heads) + " does not divide " + std::to_string(d));
    }
    const std::size_t dh = d / heads;
    const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    std::vector<BasicTensor<T>> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        auto qh = heads == 1 ? q : slice(q, 1, h * dh, dh);
        auto kh = heads == 1 ? k : slice(k, 1, h * dh, dh);
        auto vh = heads == 1 ? v : slice(v, 1, h * dh, dh);
        auto logits = scale(matmul(qh, transpose(kh, {1, 0})), inv_sqrt);
        outs.push_back(matmul(softmax_lastdim(logits), vh));
    }
    return heads == 1 ? outs.front() : concat(outs, 1);
}

template <typename T>
BasicTensor<T> cross_attention(const BasicTensor<T>& q_tokens, const BasicTensor<T>& kv_tokens,
                               const FusionParamsT<T>& params, AttentionStream stream, std::size_t heads) {
    const auto& kv = stream == AttentionStream::depth ? params.depth : params.text;
    const std::size_t d = params.query.weight.dim(1);
    if (heads == 0 || d % heads != 0) {
        throw ConfigError("head count " + std::to_string(heads) + " does not divide " + std::to_string(d));
    }
    auto q = apply(params.query, q_tokens);
    auto k = apply(kv.key, kv_tokens);
    auto v = apply(kv.value, kv_tokens);
    return apply(params.output, multi_head_attention(q, k, v, heads));
}

template <typename T>
BasicTensor<T> fuse(const BasicTensor<T>& attn_depth, const BasicTensor<T>& attn_text) {
    if (attn_depth.shape() != attn_text.shape()) {
        throw DimensionError("fuse: shape mismatch " + shape_string(attn_depth.shape()) + " vs " +
                             shape_string(attn_text.shape()));
    }
    return add(scale(attn_depth, static_cast<T>(kDepthStreamWeight)), scale(attn_text, static_cast<T>(kTextStreamWeight)));
}

template <typename T>
BasicTensor<T> trifusion_forward(const TriFusionParamsT<T>& params, const ModelDims& dims,
                                 const BasicTensor<T>& lidar, std::span<const BasicTensor<T>> views,
                                 const BasicTensor<T>& text) {
    dims.validate();
    require_shape("LiDAR input", lidar, {ModelDims::lidar_channels, dims.lidar_height, dims.lidar_width});
    if (views.size() != dims.views) {
        throw DimensionError("expected " + std::to_string(dims.views) + " camera views, got " +
                             std::to_string(views.size()));
    }
    for (const auto& v : views) {
        require_shape("camera view", v, {ModelDims::image_channels, dims.image_height, dims.image_width});
    }

    auto latent = lidar_encode(params.lidar_ae, lidar);
    auto z_lidar = tokenize(Modality::lidar_latent, latent, params.embed, dims);

    std::vector<BasicTensor<T>> depth_maps;
    depth_maps.reserve(views.size());
    for (const auto& v : views) {
        depth_maps.push_back(depth_forward(params.depth, v));
    }
    auto z_depth = tokenize<T>(Modality::depth_map, depth_maps, params.embed, dims);
    auto z_text = tokenize(Modality::text_embedding, text, params.embed, dims);

    auto attn_depth = cross_attention(z_lidar, z_depth, params.fusion, AttentionStream::depth, dims.heads);
    auto attn_text = cross_attention(z_lidar, z_text, params.fusion, AttentionStream::text, dims.heads);
    auto fused = fuse(attn_depth, attn_text);

    auto per_token = apply(params.stage_one, fused);
    auto grid = reshape(per_token, {1, dims.latent_height(), dims.latent_width()});
    return lidar_decode(params.lidar_ae, grid);
}

#define TRIFUSION_INSTANTIATE_MODELS(T)                                                                        \
    template CnnAeParamsT<T> zero_cnn_ae<T>();                                                                 \
    template DepthParamsT<T> zero_depth<T>();                                                                  \
    template TriFusionParamsT<T> zero_trifusion<T>(const ModelDims&);                                          \
    template NamedParams<T> named_params(CnnAeParamsT<T>&);                                                    \
    template NamedParams<T> named_params(DepthParamsT<T>&);                                                    \
    template NamedParams<T> named_params(TriFusionParamsT<T>&);                                                \
    template BasicTensor<T> lidar_encode(const CnnAeParamsT<T>&, const BasicTensor<T>&);                       \
    template BasicTensor<T> lidar_decode(const CnnAeParamsT<T>&, const BasicTensor<T>&);                       \
    template CnnAeOutput<T> cnn_ae_forward(const CnnAeParamsT<T>&, const BasicTensor<T>&);                     \
    template BasicTensor<T> depth_forward(const DepthParamsT<T>&, const BasicTensor<T>&);                      \
    template BasicTensor<T> tokenize(Modality, std::span<const BasicTensor<T>>, const EmbedParamsT<T>&,         \
                                     const ModelDims&);                                                        \
    template BasicTensor<T> multi_head_attention(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                                 const BasicTensor<T>&, std::size_t);                          \
    template BasicTensor<T> cross_attention(const BasicTensor<T>&, const BasicTensor<T>&,                      \
                                            const FusionParamsT<T>&, AttentionStream, std::size_t);            \
    template BasicTensor<T> fuse(const BasicTensor<T>&, const BasicTensor<T>&);                                \
    template BasicTensor<T> trifusion_forward(const TriFusionParamsT<T>&, const ModelDims&,                    \
                                              const BasicTensor<T>&, std::span<const BasicTensor<T>>,          \
                                              const BasicTensor<T>&);

TRIFUSION_INSTANTIATE_MODELS(float)
TRIFUSION_INSTANTIATE_MODELS(double)

#undef TRIFUSION_INSTANTIATE_MODELS

}  // namespace trifusion
