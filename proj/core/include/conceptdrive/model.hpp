#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "conceptdrive/concepts.hpp"
#include "conceptdrive/data.hpp"
#include "conceptdrive/tape.hpp"
#include "conceptdrive/tensor.hpp"

namespace conceptdrive {

enum class Task { angle, distance, both };

std::string to_string(Task t);
Task task_from_string(const std::string& s);

struct ModelConfig {
    std::size_t input_dim = 0;    // k + 3: concept scores plus (v, a, d)
    std::size_t model_dim = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t window = 8;       // frames a position may attend to (+/- window/2)
    std::size_t ffn_dim = 128;
    double dropout_rate = 0.1;
    Task tasks = Task::both;
    std::size_t max_seq_len = 0;
};

/// ParamError on any violated constraint: dims positive, model_dim divisible
/// by n_heads, window >= 1 and (even or == max_seq_len), dropout in [0, 1).
void validate_config(const ModelConfig& config);

/// Canonical JSON round-trip for checkpoints and run manifests.
std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& text);

bool has_angle_head(const ModelConfig& config);
bool has_distance_head(const ModelConfig& config);

struct LayerParams {
    // Attention projections. The key projection carries no bias: softmax is
    // invariant to a uniform shift of a query row's logits, so a key bias
    // could never change the output (its gradient is identically zero).
    Tensor wq, bq, wk, wv, bv, wo, bo;
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;  // pre-attention / pre-FFN norms
    Tensor w1, b1, w2, b2;              // FFN
};

struct HeadParams {
    Tensor ln_g, ln_b;  // norm on the CLS state
    Tensor w1, b1;      // model_dim -> ffn_dim
    Tensor w2, b2;      // ffn_dim -> 1
};

/// Standardization constants stored with the model (not trained): sensor
/// channels and regression targets are fitted in standardized space, and
/// predictions are mapped back through these.
struct NormStats {
    Tensor sensor_mean{1, 3, 0.0}, sensor_std{1, 3, 1.0};
    Tensor target_mean{1, 2, 0.0}, target_std{1, 2, 1.0};  // columns (angle, distance)
};

struct ModelParams {
    Tensor input_w, input_b;  // input_dim x model_dim, 1 x model_dim
    Tensor cls;               // 1 x model_dim, learned CLS embedding
    Tensor pos;               // (max_seq_len + 1) x model_dim, slot 0 = CLS
    std::vector<LayerParams> layers;
    std::vector<HeadParams> heads;  // [angle][distance] per config.tasks
    NormStats norm;
};

/// Seeded initialization; every tensor gets its own labeled sub-seed so the
/// draw for one tensor never depends on another's size.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Learnable tensors in declaration order, with stable path-style names
/// ("layer0.wq", "head_angle.w1", ...). NormStats buffers are not included.
void for_each_param(ModelParams& params,
                    const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_param(const ModelParams& params,
                    const std::function<void(const std::string&, const Tensor&)>& fn);
/// The non-learnable standardization buffers, declaration order.
void for_each_buffer(ModelParams& params,
                     const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_buffer(const ModelParams& params,
                     const std::function<void(const std::string&, const Tensor&)>& fn);

/// Number of learnable scalars; a pure function of the config.
std::size_t param_count(const ModelConfig& config);

// ---- attention ----

/// Which attention kernel a forward pass runs. The windowed kernel is the
/// O(window * n) production path; the dense reference materializes the full
/// (T+1)^2 score matrix with an additive mask and exists to check the
/// windowed kernel against straightforward code.
enum class AttentionKind { windowed, dense_reference };

struct HeadTrace {
    double cls_self = 0.0;               // CLS -> CLS weight
    std::vector<double> cls_frames;      // CLS -> frame weights, length T
    std::vector<double> row_sums;        // per-query attention mass, length T+1
};

struct LayerTrace {
    std::vector<HeadTrace> heads;
};

struct AttentionTrace {
    std::vector<LayerTrace> layers;
    /// Final-layer head-mean CLS->frame weights, length T.
    std::vector<double> final_cls_series() const;
};

/// Optional capture of every full attention distribution (masked entries
/// zero), for tests that inspect supports directly.
struct AttentionProbe {
    // [layer][head], each (T+1) x (T+1), rows = queries
    std::vector<std::vector<Tensor>> rows;
};

/// Frame-key span [lo, hi] attended by frame query i (1-based position among
/// 1..T); CLS (index 0) is always attended in addition.
struct WindowSpan {
    std::size_t lo, hi;
};
WindowSpan window_span(std::size_t i, std::size_t n_frames, std::size_t window);

/// Additive pre-softmax mask for the dense reference path: 0 where query may
/// attend, -inf elsewhere. Row/col 0 is the globally-attending CLS.
Tensor window_mask(std::size_t n_frames, std::size_t window);

/// One attention head over rows [CLS, frame_1 .. frame_T]: q, k, v are
/// (T+1) x d_head nodes. Scores scaled by 1/sqrt(d_head); masked positions
/// get -inf before the softmax. Returns the (T+1) x d_head context node and
/// fills `trace`; `probe_rows` (if given) receives the full distribution.
NodeId attention_head(Tape& tape, NodeId q, NodeId k, NodeId v, std::size_t n_frames,
                      std::size_t window, AttentionKind kind, HeadTrace& trace,
                      Tensor* probe_rows);

// ---- forward graph ----

/// Node ids of one parameter binding on a tape; `ordered` follows
/// for_each_param order so gradients map back positionally.
struct BoundLayer {
    NodeId wq, bq, wk, wv, bv, wo, bo;
    NodeId ln1_g, ln1_b, ln2_g, ln2_b;
    NodeId w1, b1, w2, b2;
};
struct BoundHead {
    NodeId ln_g, ln_b, w1, b1, w2, b2;
};
struct BoundParams {
    NodeId input_w, input_b, cls, pos;
    std::vector<BoundLayer> layers;
    std::vector<BoundHead> heads;
    std::vector<NodeId> ordered;
};
BoundParams bind_params(Tape& tape, const ModelParams& params, bool requires_grad);

/// Sensor channels shifted one frame back (row t carries row t-1, row 0
/// repeats row 0) so the final frame's own sensors — the regression target —
/// never appear in the input.
Tensor shifted_sensors(const Tensor& sensors);

/// [scores_t || v_t || a_t || d_t] -> input projection -> + positional
/// embedding, with the CLS embedding prepended at position 0 (positional
/// slot 0). Returns the (T+1) x model_dim node.
NodeId embed_frames(Tape& tape, const Tensor& scores, const Tensor& sensors_std,
                    const BoundParams& bound, const ModelConfig& config);

/// Pre-norm residual transformer block:
///   h <- h + Drop(MHA(LN1(h)));  h <- h + Drop(FFN(LN2(h))).
NodeId longformer_layer(Tape& tape, NodeId h, const BoundLayer& layer,
                        const ModelConfig& config, std::size_t n_frames, bool training,
                        SplitMix64* rng, AttentionKind kind, LayerTrace& trace,
                        std::vector<Tensor>* probe_rows);

/// LN -> linear -> GELU -> dropout -> linear; scalar (1 x 1) output node.
NodeId mlp_head(Tape& tape, NodeId cls_state, const BoundHead& head,
                const ModelConfig& config, bool training, SplitMix64* rng);

struct ForwardGraph {
    NodeId cls_state = 0;              // 1 x model_dim after the final layer
    std::vector<NodeId> head_outputs;  // standardized-scale scalars, config head order
    AttentionTrace trace;
};

/// Builds the full encoder + heads on an existing tape from precomputed
/// concept scores and standardized (already shifted) sensors.
ForwardGraph build_forward(Tape& tape, const Tensor& scores, const Tensor& sensors_std,
                           const BoundParams& bound, const ModelConfig& config, bool training,
                           SplitMix64* rng, AttentionKind kind = AttentionKind::windowed,
                           AttentionProbe* probe = nullptr);

struct Predictions {
    std::optional<double> angle;     // degrees
    std::optional<double> distance;  // meters
};

struct ForwardResult {
    Predictions predictions;
    AttentionTrace trace;
};

/// End-to-end evaluation-mode inference: concept scoring, sensor shift +
/// standardization, encoder, heads, de-standardized predictions.
ForwardResult forward(const DriveSequence& seq, const ConceptSet& set,
                      const ModelParams& params, const ModelConfig& config,
                      AttentionKind kind = AttentionKind::windowed,
                      AttentionProbe* probe = nullptr);

// ---- checkpoint ----

/// "CGCK", version u32=1, length-prefixed canonical config JSON, then every
/// learnable tensor (for_each_param order) followed by the NormStats
/// buffers, each as u32 rows, u32 cols, f64 data.
void save_checkpoint(const ModelParams& params, const ModelConfig& config,
                     const std::string& path);

struct Checkpoint {
    ModelParams params;
    ModelConfig config;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace conceptdrive
