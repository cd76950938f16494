#include "docdefend/tinylm.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "docdefend/jsonl.hpp"

namespace docdefend {

void TinyLmConfig::Validate() const {
    if (d_model < 1 || n_heads < 1 || n_layers < 1 || d_ff < 1 || context_len < 2) {
        ThrowValidation("tiny model dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        ThrowValidation("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                        std::to_string(n_heads) + ")");
    }
}

bool IsTinyLmSpec(const std::string& model_id) { return StartsWith(model_id, "tiny:"); }

TinyLmSpec ParseTinyLmSpec(const std::string& model_id) {
    if (!IsTinyLmSpec(model_id)) ThrowValidation("not a tiny model spec: " + model_id);
    TinyLmSpec spec;
    std::string args = model_id.substr(5);
    size_t pos = 0;
    while (pos < args.size()) {
        size_t comma = args.find(',', pos);
        if (comma == std::string::npos) comma = args.size();
        std::string field = args.substr(pos, comma - pos);
        pos = comma + 1;
        if (field.empty()) continue;
        size_t eq = field.find('=');
        if (eq == std::string::npos) ThrowValidation("bad tiny model spec field: " + field);
        std::string key = field.substr(0, eq);
        long long value = std::stoll(field.substr(eq + 1));
        if (key == "d") spec.config.d_model = static_cast<int>(value);
        else if (key == "heads") spec.config.n_heads = static_cast<int>(value);
        else if (key == "layers") spec.config.n_layers = static_cast<int>(value);
        else if (key == "ff") spec.config.d_ff = static_cast<int>(value);
        else if (key == "ctx") spec.config.context_len = static_cast<int>(value);
        else if (key == "seed") spec.config.init_seed = static_cast<uint64_t>(value);
        else if (key == "vocab") spec.vocab_cap = static_cast<size_t>(value);
        else ThrowValidation("unknown tiny model spec key: " + key);
    }
    spec.config.Validate();
    return spec;
}

std::string ProjKindName(ProjKind kind) {
    switch (kind) {
        case ProjKind::kQProj: return "q_proj";
        case ProjKind::kKProj: return "k_proj";
        case ProjKind::kVProj: return "v_proj";
        case ProjKind::kOProj: return "o_proj";
        case ProjKind::kFfIn: return "ff_in";
        case ProjKind::kFfOut: return "ff_out";
        case ProjKind::kLmHead: return "lm_head";
    }
    return "q_proj";
}

ProjKind ProjKindFromName(const std::string& name) {
    for (ProjKind kind : {ProjKind::kQProj, ProjKind::kKProj, ProjKind::kVProj, ProjKind::kOProj,
                          ProjKind::kFfIn, ProjKind::kFfOut, ProjKind::kLmHead}) {
        if (ProjKindName(kind) == name) return kind;
    }
    ThrowValidation("unknown projection name: " + name);
}

void AdapterConfig::Validate() const {
    if (rank < 1) ThrowValidation("adapter rank must be >= 1");
    if (scaling <= 0.0) ThrowValidation("adapter scaling must be positive");
    if (dropout < 0.0 || dropout >= 1.0) ThrowValidation("adapter dropout must be in [0, 1)");
    if (target_projections.empty()) ThrowValidation("adapter needs at least one target projection");
    for (const auto& name : target_projections) ProjKindFromName(name);
}

const LoraDelta* AdapterSet::Find(int layer, ProjKind kind) const {
    auto it = deltas.find({layer, kind});
    return it == deltas.end() ? nullptr : &it->second;
}

size_t AdapterSet::ParameterCount() const {
    size_t count = 0;
    for (const auto& [key, delta] : deltas) {
        count += static_cast<size_t>(delta.down.size()) + static_cast<size_t>(delta.up.size());
    }
    return count;
}

void AdapterGrads::Accumulate(const AdapterKey& key, const Eigen::MatrixXd& d_down,
                              const Eigen::MatrixXd& d_up) {
    auto it = grads.find(key);
    if (it == grads.end()) {
        grads.emplace(key, std::make_pair(d_down, d_up));
    } else {
        it->second.first += d_down;
        it->second.second += d_up;
    }
}

namespace {

Eigen::MatrixXd GaussianMatrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = stddev * rng.NextGaussian();
    }
    return m;
}

nlohmann::json MatrixToJson(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd MatrixFromJson(const nlohmann::json& j) {
    if (!j.is_array() || j.empty()) ThrowIo("bad matrix in model file");
    Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (static_cast<Eigen::Index>(j[i].size()) != cols) ThrowIo("ragged matrix in model file");
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
    }
    return m;
}

nlohmann::json VectorToJson(const Eigen::VectorXd& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Eigen::VectorXd VectorFromJson(const nlohmann::json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
    return v;
}

// y = x * w (+ bias) (+ adapter branch). The cache keeps what backward needs.
Eigen::MatrixXd LinearForward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w,
                              const Eigen::VectorXd* bias, const LoraDelta* lora,
                              LinearCache& cache, Rng* dropout_rng) {
    cache.x = x;
    Eigen::MatrixXd y = x * w;
    if (bias) y.rowwise() += bias->transpose();
    if (lora) {
        if (lora->dropout > 0.0 && dropout_rng) {
            double keep = 1.0 - lora->dropout;
            cache.drop_mask = Eigen::MatrixXd(x.rows(), x.cols());
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                for (Eigen::Index j = 0; j < x.cols(); ++j) {
                    cache.drop_mask(i, j) = dropout_rng->NextDouble() < lora->dropout ? 0.0 : 1.0 / keep;
                }
            }
            cache.x_dropped = x.cwiseProduct(cache.drop_mask);
        } else {
            cache.drop_mask.resize(0, 0);
            cache.x_dropped = x;
        }
        y += lora->scale * ((cache.x_dropped * lora->down) * lora->up);
    } else {
        cache.x_dropped.resize(0, 0);
        cache.drop_mask.resize(0, 0);
    }
    return y;
}

Eigen::MatrixXd LinearBackward(const Eigen::MatrixXd& dy, const Eigen::MatrixXd& w,
                               const LoraDelta* lora, const LinearCache& cache,
                               const AdapterKey& key, AdapterGrads* grads) {
    Eigen::MatrixXd dx = dy * w.transpose();
    if (lora) {
        Eigen::MatrixXd dy_up = dy * lora->up.transpose();            // n x r
        Eigen::MatrixXd d_down = lora->scale * (cache.x_dropped.transpose() * dy_up);
        Eigen::MatrixXd d_up =
            lora->scale * ((cache.x_dropped * lora->down).transpose() * dy);
        if (grads) grads->Accumulate(key, d_down, d_up);
        Eigen::MatrixXd dxd = lora->scale * (dy_up * lora->down.transpose());
        if (cache.drop_mask.size() > 0) dxd = dxd.cwiseProduct(cache.drop_mask);
        dx += dxd;
    }
    return dx;
}

constexpr double kMaskValue = -1e30;

}  // namespace

TinyLm::TinyLm(TinyLmConfig config, Vocab vocab)
    : config_(config), vocab_(std::move(vocab)) {
    config_.Validate();
    const int v = vocab_.size();
    const int d = config_.d_model;
    Rng rng(DeriveSeed(config_.init_seed, "tinylm-init"));
    const double stddev = 0.02;
    token_embedding_ = GaussianMatrix(v, d, stddev, rng);
    position_embedding_ = GaussianMatrix(config_.context_len, d, stddev, rng);
    layers_.resize(static_cast<size_t>(config_.n_layers));
    for (auto& layer : layers_) {
        layer.ln1_gamma = Eigen::VectorXd::Ones(d);
        layer.ln1_beta = Eigen::VectorXd::Zero(d);
        layer.attn.wq = GaussianMatrix(d, d, stddev, rng);
        layer.attn.wk = GaussianMatrix(d, d, stddev, rng);
        layer.attn.wv = GaussianMatrix(d, d, stddev, rng);
        layer.attn.wo = GaussianMatrix(d, d, stddev, rng);
        layer.ln2_gamma = Eigen::VectorXd::Ones(d);
        layer.ln2_beta = Eigen::VectorXd::Zero(d);
        layer.ff_in = GaussianMatrix(d, config_.d_ff, stddev, rng);
        layer.ff_in_bias = Eigen::VectorXd::Zero(config_.d_ff);
        layer.ff_out = GaussianMatrix(config_.d_ff, d, stddev, rng);
        layer.ff_out_bias = Eigen::VectorXd::Zero(d);
    }
    final_gamma_ = Eigen::VectorXd::Ones(d);
    final_beta_ = Eigen::VectorXd::Zero(d);
    lm_head_ = GaussianMatrix(d, v, stddev, rng);
    lm_head_bias_ = Eigen::VectorXd::Zero(v);
}

std::string TinyLm::fingerprint() const {
    uint64_t h = Fnv1a64("tinylm");
    auto mix_int = [&](long long value) { h = Fnv1a64(std::to_string(value) + ";", h); };
    mix_int(config_.d_model);
    mix_int(config_.n_heads);
    mix_int(config_.n_layers);
    mix_int(config_.d_ff);
    mix_int(config_.context_len);
    mix_int(static_cast<long long>(config_.init_seed));
    for (const auto& token : vocab_.tokens()) h = Fnv1a64(token + "\x1f", h);
    auto mix_matrix = [&](const Eigen::MatrixXd& m) {
        h = Fnv1a64(std::string_view(reinterpret_cast<const char*>(m.data()),
                                     static_cast<size_t>(m.size()) * sizeof(double)),
                    h);
    };
    mix_matrix(token_embedding_);
    mix_matrix(lm_head_);
    return "lm" + ToHex16(h);
}

void TinyLm::Forward(const std::vector<int>& ids, ForwardCache& cache,
                     const AdapterSet* adapters, Rng* dropout_rng) const {
    const Eigen::Index n = static_cast<Eigen::Index>(ids.size());
    if (n == 0) ThrowValidation("forward: empty token sequence");
    if (n > config_.context_len) {
        ThrowValidation("input-too-long: sequence of " + std::to_string(n) +
                        " tokens exceeds the context limit of " + std::to_string(config_.context_len));
    }
    const int d = config_.d_model;
    const int heads = config_.n_heads;
    const int dh = d / heads;
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    cache.ids = ids;
    cache.layers.assign(layers_.size(), LayerCache{});

    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        int id = ids[static_cast<size_t>(i)];
        if (id < 0 || id >= vocab_.size()) ThrowValidation("token id out of range: " + std::to_string(id));
        x.row(i) = token_embedding_.row(id) + position_embedding_.row(i);
    }

    auto lora = [&](int layer, ProjKind kind) -> const LoraDelta* {
        return adapters ? adapters->Find(layer, kind) : nullptr;
    };

    for (size_t l = 0; l < layers_.size(); ++l) {
        const LayerWeights& w = layers_[l];
        LayerCache& lc = cache.layers[l];
        const int li = static_cast<int>(l);
        lc.x_in = x;

        Eigen::MatrixXd h1 = nn::LayerNormForward<double>(x, w.ln1_gamma, w.ln1_beta, lc.ln1);
        lc.q = LinearForward(h1, w.attn.wq, nullptr, lora(li, ProjKind::kQProj), lc.q_lin, dropout_rng);
        lc.k = LinearForward(h1, w.attn.wk, nullptr, lora(li, ProjKind::kKProj), lc.k_lin, dropout_rng);
        lc.v = LinearForward(h1, w.attn.wv, nullptr, lora(li, ProjKind::kVProj), lc.v_lin, dropout_rng);

        lc.attn_probs.clear();
        lc.attn_probs.reserve(static_cast<size_t>(heads));
        lc.attn_concat.resize(n, d);
        for (int h = 0; h < heads; ++h) {
            auto qh = lc.q.middleCols(h * dh, dh);
            auto kh = lc.k.middleCols(h * dh, dh);
            auto vh = lc.v.middleCols(h * dh, dh);
            Eigen::MatrixXd scores = (qh * kh.transpose()) * attn_scale;
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index j = i + 1; j < n; ++j) scores(i, j) = kMaskValue;
            }
            Eigen::MatrixXd probs = nn::SoftmaxRows(scores);
            lc.attn_concat.middleCols(h * dh, dh) = probs * vh;
            lc.attn_probs.push_back(std::move(probs));
        }
        Eigen::MatrixXd attn_out = LinearForward(lc.attn_concat, w.attn.wo, nullptr,
                                                 lora(li, ProjKind::kOProj), lc.o_lin, dropout_rng);
        lc.x_mid = x + attn_out;

        Eigen::MatrixXd h2 = nn::LayerNormForward<double>(lc.x_mid, w.ln2_gamma, w.ln2_beta, lc.ln2);
        lc.ff_pre = LinearForward(h2, w.ff_in, &w.ff_in_bias, lora(li, ProjKind::kFfIn),
                                  lc.ff_in_lin, dropout_rng);
        Eigen::MatrixXd act = nn::Gelu<double>(lc.ff_pre);
        Eigen::MatrixXd ff_out = LinearForward(act, w.ff_out, &w.ff_out_bias,
                                               lora(li, ProjKind::kFfOut), lc.ff_out_lin, dropout_rng);
        x = lc.x_mid + ff_out;
    }

    Eigen::MatrixXd y = nn::LayerNormForward<double>(x, final_gamma_, final_beta_, cache.lnf);
    cache.logits = LinearForward(y, lm_head_, &lm_head_bias_, lora(-1, ProjKind::kLmHead),
                                 cache.head_lin, dropout_rng);
}

Eigen::MatrixXd TinyLm::Logits(const std::vector<int>& ids, const AdapterSet* adapters) const {
    ForwardCache cache;
    Forward(ids, cache, adapters, nullptr);
    return std::move(cache.logits);
}

void TinyLm::Backward(const ForwardCache& cache, const Eigen::MatrixXd& dlogits,
                      const AdapterSet& adapters, AdapterGrads& grads) const {
    const Eigen::Index n = dlogits.rows();
    const int d = config_.d_model;
    const int heads = config_.n_heads;
    const int dh = d / heads;
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Eigen::MatrixXd dy = LinearBackward(dlogits, lm_head_, adapters.Find(-1, ProjKind::kLmHead),
                                        cache.head_lin, {-1, ProjKind::kLmHead}, &grads);
    Eigen::MatrixXd dx = nn::LayerNormBackward<double>(dy, final_gamma_, cache.lnf);

    for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
        const LayerWeights& w = layers_[static_cast<size_t>(l)];
        const LayerCache& lc = cache.layers[static_cast<size_t>(l)];

        // Feed-forward block.
        Eigen::MatrixXd d_act = LinearBackward(dx, w.ff_out, adapters.Find(l, ProjKind::kFfOut),
                                               lc.ff_out_lin, {l, ProjKind::kFfOut}, &grads);
        Eigen::MatrixXd d_pre = nn::GeluBackward<double>(d_act, lc.ff_pre);
        Eigen::MatrixXd d_h2 = LinearBackward(d_pre, w.ff_in, adapters.Find(l, ProjKind::kFfIn),
                                              lc.ff_in_lin, {l, ProjKind::kFfIn}, &grads);
        Eigen::MatrixXd d_x_mid = dx + nn::LayerNormBackward<double>(d_h2, w.ln2_gamma, lc.ln2);

        // Attention block.
        Eigen::MatrixXd d_concat = LinearBackward(d_x_mid, w.attn.wo, adapters.Find(l, ProjKind::kOProj),
                                                  lc.o_lin, {l, ProjKind::kOProj}, &grads);
        Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(n, d);
        Eigen::MatrixXd dk = Eigen::MatrixXd::Zero(n, d);
        Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(n, d);
        for (int h = 0; h < heads; ++h) {
            auto d_ctx = d_concat.middleCols(h * dh, dh);
            auto qh = lc.q.middleCols(h * dh, dh);
            auto kh = lc.k.middleCols(h * dh, dh);
            auto vh = lc.v.middleCols(h * dh, dh);
            const Eigen::MatrixXd& probs = lc.attn_probs[static_cast<size_t>(h)];

            Eigen::MatrixXd d_probs = d_ctx * vh.transpose();
            dv.middleCols(h * dh, dh) = probs.transpose() * d_ctx;
            Eigen::MatrixXd d_scores(n, n);
            for (Eigen::Index i = 0; i < n; ++i) {
                d_scores.row(i) = nn::SoftmaxBackwardRow(probs.row(i), d_probs.row(i));
            }
            dq.middleCols(h * dh, dh) = (d_scores * kh) * attn_scale;
            dk.middleCols(h * dh, dh) = (d_scores.transpose() * qh) * attn_scale;
        }
        Eigen::MatrixXd d_h1 =
            LinearBackward(dq, w.attn.wq, adapters.Find(l, ProjKind::kQProj), lc.q_lin,
                           {l, ProjKind::kQProj}, &grads) +
            LinearBackward(dk, w.attn.wk, adapters.Find(l, ProjKind::kKProj), lc.k_lin,
                           {l, ProjKind::kKProj}, &grads) +
            LinearBackward(dv, w.attn.wv, adapters.Find(l, ProjKind::kVProj), lc.v_lin,
                           {l, ProjKind::kVProj}, &grads);
        dx = d_x_mid + nn::LayerNormBackward<double>(d_h1, w.ln1_gamma, lc.ln1);
    }
}

std::vector<int> TinyLm::Continue(const std::vector<int>& ids, int max_new_tokens,
                                  double temperature, uint64_t sample_seed,
                                  const AdapterSet* adapters) const {
    std::vector<int> current = ids;
    std::vector<int> generated;
    Rng rng(sample_seed);
    for (int step = 0; step < max_new_tokens; ++step) {
        if (static_cast<int>(current.size()) >= config_.context_len) break;
        Eigen::MatrixXd logits = Logits(current, adapters);
        Eigen::RowVectorXd row = logits.row(logits.rows() - 1);
        int next = 0;
        if (temperature <= 0.0) {
            double best = row(0);
            for (Eigen::Index j = 1; j < row.size(); ++j) {
                if (row(j) > best) {
                    best = row(j);
                    next = static_cast<int>(j);
                }
            }
        } else {
            Eigen::RowVectorXd scaled = row / temperature;
            double max = scaled.maxCoeff();
            Eigen::ArrayXd probs = (scaled.transpose().array() - max).exp();
            probs /= probs.sum();
            double r = rng.NextDouble();
            double cumulative = 0.0;
            next = static_cast<int>(probs.size()) - 1;
            for (Eigen::Index j = 0; j < probs.size(); ++j) {
                cumulative += probs(j);
                if (r < cumulative) {
                    next = static_cast<int>(j);
                    break;
                }
            }
        }
        if (next == Vocab::kEos) break;
        current.push_back(next);
        generated.push_back(next);
    }
    return generated;
}

TinyLm TinyLm::MergeAdapters(const AdapterSet& adapters) const {
    TinyLm merged = *this;
    for (const auto& [key, delta] : adapters.deltas) {
        Eigen::MatrixXd patch = delta.scale * (delta.down * delta.up);
        auto [layer, kind] = key;
        if (kind == ProjKind::kLmHead) {
            merged.lm_head_ += patch;
            continue;
        }
        LayerWeights& w = merged.layers_.at(static_cast<size_t>(layer));
        switch (kind) {
            case ProjKind::kQProj: w.attn.wq += patch; break;
            case ProjKind::kKProj: w.attn.wk += patch; break;
            case ProjKind::kVProj: w.attn.wv += patch; break;
            case ProjKind::kOProj: w.attn.wo += patch; break;
            case ProjKind::kFfIn: w.ff_in += patch; break;
            case ProjKind::kFfOut: w.ff_out += patch; break;
            case ProjKind::kLmHead: break;
        }
    }
    return merged;
}

std::pair<int, int> TinyLm::TargetDims(ProjKind kind) const {
    const int d = config_.d_model;
    switch (kind) {
        case ProjKind::kQProj:
        case ProjKind::kKProj:
        case ProjKind::kVProj:
        case ProjKind::kOProj: return {d, d};
        case ProjKind::kFfIn: return {d, config_.d_ff};
        case ProjKind::kFfOut: return {config_.d_ff, d};
        case ProjKind::kLmHead: return {d, vocab_.size()};
    }
    return {d, d};
}

void TinyLm::Save(const std::string& path) const {
    nlohmann::json j;
    j["format"] = "docdefend-tinylm-v1";
    j["config"] = {
        {"d_model", config_.d_model}, {"n_heads", config_.n_heads},
        {"n_layers", config_.n_layers}, {"d_ff", config_.d_ff},
        {"context_len", config_.context_len}, {"init_seed", config_.init_seed},
    };
    nlohmann::json vocab = nlohmann::json::array();
    const auto& tokens = vocab_.tokens();
    for (size_t i = 4; i < tokens.size(); ++i) vocab.push_back(tokens[i]);
    j["vocab"] = std::move(vocab);

    nlohmann::json weights;
    weights["token_embedding"] = MatrixToJson(token_embedding_);
    weights["position_embedding"] = MatrixToJson(position_embedding_);
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& w : layers_) {
        nlohmann::json layer;
        layer["ln1_gamma"] = VectorToJson(w.ln1_gamma);
        layer["ln1_beta"] = VectorToJson(w.ln1_beta);
        layer["wq"] = MatrixToJson(w.attn.wq);
        layer["wk"] = MatrixToJson(w.attn.wk);
        layer["wv"] = MatrixToJson(w.attn.wv);
        layer["wo"] = MatrixToJson(w.attn.wo);
        layer["ln2_gamma"] = VectorToJson(w.ln2_gamma);
        layer["ln2_beta"] = VectorToJson(w.ln2_beta);
        layer["ff_in"] = MatrixToJson(w.ff_in);
        layer["ff_in_bias"] = VectorToJson(w.ff_in_bias);
        layer["ff_out"] = MatrixToJson(w.ff_out);
        layer["ff_out_bias"] = VectorToJson(w.ff_out_bias);
        layers.push_back(std::move(layer));
    }
    weights["layers"] = std::move(layers);
    weights["final_gamma"] = VectorToJson(final_gamma_);
    weights["final_beta"] = VectorToJson(final_beta_);
    weights["lm_head"] = MatrixToJson(lm_head_);
    weights["lm_head_bias"] = VectorToJson(lm_head_bias_);
    j["weights"] = std::move(weights);
    WriteFileOrThrow(path, j.dump());
}

TinyLm TinyLm::Load(const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(ReadFileOrThrow(path), nullptr, false);
    if (j.is_discarded() || j.value("format", "") != "docdefend-tinylm-v1") {
        ThrowIo("not a tiny model file: " + path);
    }
    TinyLmConfig config;
    const auto& cj = j.at("config");
    config.d_model = cj.at("d_model").get<int>();
    config.n_heads = cj.at("n_heads").get<int>();
    config.n_layers = cj.at("n_layers").get<int>();
    config.d_ff = cj.at("d_ff").get<int>();
    config.context_len = cj.at("context_len").get<int>();
    config.init_seed = cj.at("init_seed").get<uint64_t>();

    std::vector<std::string> tokens;
    for (const auto& token : j.at("vocab")) tokens.push_back(token.get<std::string>());
    TinyLm model(config, Vocab(std::move(tokens)));

    const auto& weights = j.at("weights");
    model.token_embedding_ = MatrixFromJson(weights.at("token_embedding"));
    model.position_embedding_ = MatrixFromJson(weights.at("position_embedding"));
    const auto& layers = weights.at("layers");
    if (static_cast<int>(layers.size()) != config.n_layers) ThrowIo("layer count mismatch in " + path);
    for (int l = 0; l < config.n_layers; ++l) {
        LayerWeights& w = model.layers_[static_cast<size_t>(l)];
        const auto& lj = layers[static_cast<size_t>(l)];
        w.ln1_gamma = VectorFromJson(lj.at("ln1_gamma"));
        w.ln1_beta = VectorFromJson(lj.at("ln1_beta"));
        w.attn.wq = MatrixFromJson(lj.at("wq"));
        w.attn.wk = MatrixFromJson(lj.at("wk"));
        w.attn.wv = MatrixFromJson(lj.at("wv"));
        w.attn.wo = MatrixFromJson(lj.at("wo"));
        w.ln2_gamma = VectorFromJson(lj.at("ln2_gamma"));
        w.ln2_beta = VectorFromJson(lj.at("ln2_beta"));
        w.ff_in = MatrixFromJson(lj.at("ff_in"));
        w.ff_in_bias = VectorFromJson(lj.at("ff_in_bias"));
        w.ff_out = MatrixFromJson(lj.at("ff_out"));
        w.ff_out_bias = VectorFromJson(lj.at("ff_out_bias"));
    }
    model.final_gamma_ = VectorFromJson(weights.at("final_gamma"));
    model.final_beta_ = VectorFromJson(weights.at("final_beta"));
    model.lm_head_ = MatrixFromJson(weights.at("lm_head"));
    model.lm_head_bias_ = VectorFromJson(weights.at("lm_head_bias"));
    return model;
}

void AdapterSet::Save(const std::string& path) const {
    nlohmann::json j;
    j["format"] = "docdefend-adapter-v1";
    j["config"] = {
        {"rank", config.rank},
        {"scaling", config.scaling},
        {"dropout", config.dropout},
        {"target_projections", config.target_projections},
    };
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [key, delta] : deltas) {
        nlohmann::json entry;
        entry["layer"] = key.first;
        entry["kind"] = ProjKindName(key.second);
        entry["scale"] = delta.scale;
        entry["dropout"] = delta.dropout;
        entry["down"] = MatrixToJson(delta.down);
        entry["up"] = MatrixToJson(delta.up);
        entries.push_back(std::move(entry));
    }
    j["deltas"] = std::move(entries);
    WriteFileOrThrow(path, j.dump());
}

AdapterSet AdapterSet::Load(const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(ReadFileOrThrow(path), nullptr, false);
    if (j.is_discarded() || j.value("format", "") != "docdefend-adapter-v1") {
        ThrowIo("not an adapter file: " + path);
    }
    AdapterSet set;
    const auto& cj = j.at("config");
    set.config.rank = cj.at("rank").get<int>();
    set.config.scaling = cj.at("scaling").get<double>();
    set.config.dropout = cj.at("dropout").get<double>();
    set.config.target_projections = cj.at("target_projections").get<std::vector<std::string>>();
    for (const auto& entry : j.at("deltas")) {
        LoraDelta delta;
        delta.scale = entry.at("scale").get<double>();
        delta.dropout = entry.at("dropout").get<double>();
        delta.down = MatrixFromJson(entry.at("down"));
        delta.up = MatrixFromJson(entry.at("up"));
        set.deltas[{entry.at("layer").get<int>(), ProjKindFromName(entry.at("kind").get<std::string>())}] =
            std::move(delta);
    }
    return set;
}

AdapterSet InitAdapters(const TinyLm& model, const AdapterConfig& config, uint64_t seed) {
    config.Validate();
    AdapterSet set;
    set.config = config;
    Rng rng(DeriveSeed(seed, "adapter-init"));
    const double scale = config.scaling / static_cast<double>(config.rank);
    for (const auto& name : config.target_projections) {
        ProjKind kind = ProjKindFromName(name);
        auto [in, out] = model.TargetDims(kind);
        auto make = [&](int layer) {
            LoraDelta delta;
            delta.down = GaussianMatrix(in, config.rank, 0.02, rng);
            delta.up = Eigen::MatrixXd::Zero(config.rank, out);
            delta.scale = scale;
            delta.dropout = config.dropout;
            set.deltas[{layer, kind}] = std::move(delta);
        };
        if (kind == ProjKind::kLmHead) {
            make(-1);
        } else {
            for (int l = 0; l < model.config().n_layers; ++l) make(l);
        }
    }
    return set;
}

}  // namespace docdefend
