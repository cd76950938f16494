#ifndef DOCDEFEND_TINYLM_HPP
#define DOCDEFEND_TINYLM_HPP

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "docdefend/common.hpp"
#include "docdefend/nn.hpp"
#include "docdefend/tokenizer.hpp"

namespace docdefend {

// A small causal transformer, CPU-sized. Pre-norm blocks, learned positional
// embeddings, untied output head. Double precision throughout so loss
// comparisons against oracles are tight.

struct TinyLmConfig {
    int d_model = 64;
    int n_heads = 2;
    int n_layers = 1;
    int d_ff = 256;
    int context_len = 256;
    uint64_t init_seed = 1;

    void Validate() const;
};

// Model spec strings create fresh models, e.g.
//   tiny:d=64,heads=2,layers=1,ff=256,ctx=256,seed=7,vocab=4096
// The vocabulary is built later from the training dataset.
struct TinyLmSpec {
    TinyLmConfig config;
    size_t vocab_cap = 8192;
};
bool IsTinyLmSpec(const std::string& model_id);
TinyLmSpec ParseTinyLmSpec(const std::string& model_id);

// ---------------------------------------------------------------------------
// LoRA adapters.

enum class ProjKind { kQProj, kKProj, kVProj, kOProj, kFfIn, kFfOut, kLmHead };

std::string ProjKindName(ProjKind kind);
ProjKind ProjKindFromName(const std::string& name);

struct AdapterConfig {
    int rank = 8;
    double scaling = 15.0;  // alpha; effective delta is (alpha / rank) * down * up
    double dropout = 0.05;
    std::vector<std::string> target_projections = {"q_proj", "v_proj"};

    void Validate() const;
};

// One low-rank delta W += scale * down * up, in row-vector convention
// (x is 1 x in, W is in x out).
struct LoraDelta {
    Eigen::MatrixXd down;  // in x r, gaussian init
    Eigen::MatrixXd up;    // r x out, zero init
    double scale = 1.0;
    double dropout = 0.0;
};

// Keyed by (layer, kind); layer is -1 for the lm_head.
using AdapterKey = std::pair<int, ProjKind>;

struct AdapterSet {
    AdapterConfig config;
    std::map<AdapterKey, LoraDelta> deltas;

    const LoraDelta* Find(int layer, ProjKind kind) const;
    size_t ParameterCount() const;

    void Save(const std::string& path) const;
    static AdapterSet Load(const std::string& path);
};

struct AdapterGrads {
    std::map<AdapterKey, std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> grads;  // (d_down, d_up)

    void Accumulate(const AdapterKey& key, const Eigen::MatrixXd& d_down,
                    const Eigen::MatrixXd& d_up);
};

// ---------------------------------------------------------------------------
// Weights.

struct AttentionWeights {
    Eigen::MatrixXd wq, wk, wv, wo;  // each d x d
};

struct LayerWeights {
    Eigen::VectorXd ln1_gamma, ln1_beta;
    AttentionWeights attn;
    Eigen::VectorXd ln2_gamma, ln2_beta;
    Eigen::MatrixXd ff_in;   // d x d_ff
    Eigen::VectorXd ff_in_bias;
    Eigen::MatrixXd ff_out;  // d_ff x d
    Eigen::VectorXd ff_out_bias;
};

struct LinearCache {
    Eigen::MatrixXd x;
    Eigen::MatrixXd x_dropped;  // input to the adapter branch (empty if no adapter)
    Eigen::MatrixXd drop_mask;  // empty unless dropout was applied
};

struct LayerCache {
    Eigen::MatrixXd x_in;
    nn::LayerNormCache<double> ln1;
    LinearCache q_lin, k_lin, v_lin, o_lin;
    Eigen::MatrixXd q, k, v;
    std::vector<Eigen::MatrixXd> attn_probs;  // per head, n x n
    Eigen::MatrixXd attn_concat;
    Eigen::MatrixXd x_mid;
    nn::LayerNormCache<double> ln2;
    LinearCache ff_in_lin, ff_out_lin;
    Eigen::MatrixXd ff_pre;
};

struct ForwardCache {
    std::vector<int> ids;
    std::vector<LayerCache> layers;
    nn::LayerNormCache<double> lnf;
    LinearCache head_lin;
    Eigen::MatrixXd logits;  // n x V
};

class TinyLm {
public:
    TinyLm(TinyLmConfig config, Vocab vocab);

    const TinyLmConfig& config() const { return config_; }
    const Vocab& vocab() const { return vocab_; }
    std::string fingerprint() const;

    // Full-sequence forward. `adapters` may be null; `dropout_rng` non-null
    // enables adapter dropout (training mode).
    void Forward(const std::vector<int>& ids, ForwardCache& cache,
                 const AdapterSet* adapters = nullptr, Rng* dropout_rng = nullptr) const;

    Eigen::MatrixXd Logits(const std::vector<int>& ids,
                           const AdapterSet* adapters = nullptr) const;

    // Backprop of dlogits into the adapter parameters. Base weights stay
    // frozen; only LoRA grads are produced.
    void Backward(const ForwardCache& cache, const Eigen::MatrixXd& dlogits,
                  const AdapterSet& adapters, AdapterGrads& grads) const;

    // Greedy (temperature 0) or seeded sampled continuation. Stops at <eos>.
    std::vector<int> Continue(const std::vector<int>& ids, int max_new_tokens,
                              double temperature, uint64_t sample_seed,
                              const AdapterSet* adapters = nullptr) const;

    // Copy with adapter deltas folded into the base weights.
    TinyLm MergeAdapters(const AdapterSet& adapters) const;

    // Init shape for an adapter target, (in, out).
    std::pair<int, int> TargetDims(ProjKind kind) const;

    void Save(const std::string& path) const;
    static TinyLm Load(const std::string& path);

    // Mutable access used by tests to construct degenerate models.
    Eigen::MatrixXd& lm_head() { return lm_head_; }
    Eigen::VectorXd& lm_head_bias() { return lm_head_bias_; }

private:
    TinyLmConfig config_;
    Vocab vocab_;
    Eigen::MatrixXd token_embedding_;     // V x d
    Eigen::MatrixXd position_embedding_;  // context_len x d
    std::vector<LayerWeights> layers_;
    Eigen::VectorXd final_gamma_, final_beta_;
    Eigen::MatrixXd lm_head_;             // d x V
    Eigen::VectorXd lm_head_bias_;

    friend AdapterSet InitAdapters(const TinyLm& model, const AdapterConfig& config, uint64_t seed);
};

// Fresh adapter set for the configured targets. down is gaussian, up is zero,
// so the initial delta is exactly zero.
AdapterSet InitAdapters(const TinyLm& model, const AdapterConfig& config, uint64_t seed);

}  // namespace docdefend

#endif  // DOCDEFEND_TINYLM_HPP
