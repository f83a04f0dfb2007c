#include "conceptdrive/model.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "binio.hpp"
#include "conceptdrive/rng.hpp"
#include "json.hpp"

namespace conceptdrive {

using nlohmann::json;

std::string to_string(Task t) {
    switch (t) {
        case Task::angle: return "angle";
        case Task::distance: return "distance";
        case Task::both: return "both";
    }
    return "both";
}

Task task_from_string(const std::string& s) {
    if (s == "angle") return Task::angle;
    if (s == "distance") return Task::distance;
    if (s == "both") return Task::both;
    throw ParamError("unknown task \"" + s + "\"");
}

bool has_angle_head(const ModelConfig& c) { return c.tasks != Task::distance; }
bool has_distance_head(const ModelConfig& c) { return c.tasks != Task::angle; }

void validate_config(const ModelConfig& c) {
    if (c.input_dim < 4) throw ParamError("input_dim must be at least 4 (k >= 1 plus 3 sensors)");
    if (c.model_dim == 0 || c.n_layers == 0 || c.n_heads == 0 || c.ffn_dim == 0)
        throw ParamError("model dimensions must be positive");
    if (c.model_dim % c.n_heads != 0)
        throw ParamError("model_dim " + std::to_string(c.model_dim) +
                         " not divisible by n_heads " + std::to_string(c.n_heads));
    if (c.window < 1) throw ParamError("window must be >= 1");
    if (c.window % 2 != 0 && c.window != c.max_seq_len)
        throw ParamError("window must be even or equal to max_seq_len");
    if (c.dropout_rate < 0.0 || c.dropout_rate >= 1.0)
        throw ParamError("dropout_rate must be in [0, 1)");
    if (c.max_seq_len < 2) throw ParamError("max_seq_len must be >= 2");
}

std::string config_to_json(const ModelConfig& c) {
    json j;
    j["input_dim"] = c.input_dim;
    j["model_dim"] = c.model_dim;
    j["n_layers"] = c.n_layers;
    j["n_heads"] = c.n_heads;
    j["window"] = c.window;
    j["ffn_dim"] = c.ffn_dim;
    j["dropout_rate"] = c.dropout_rate;
    j["tasks"] = to_string(c.tasks);
    j["max_seq_len"] = c.max_seq_len;
    return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("model config: ") + e.what(), e.byte);
    }
    ModelConfig c;
    try {
        c.input_dim = j.at("input_dim").get<std::size_t>();
        c.model_dim = j.at("model_dim").get<std::size_t>();
        c.n_layers = j.at("n_layers").get<std::size_t>();
        c.n_heads = j.at("n_heads").get<std::size_t>();
        c.window = j.at("window").get<std::size_t>();
        c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
        c.dropout_rate = j.at("dropout_rate").get<double>();
        c.tasks = task_from_string(j.at("tasks").get<std::string>());
        c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("model config: ") + e.what(), 0);
    }
    validate_config(c);
    return c;
}

namespace {

/// Zero-filled parameter tensors with the shapes the config dictates.
ModelParams make_params(const ModelConfig& c) {
    ModelParams p;
    p.input_w = Tensor(c.input_dim, c.model_dim);
    p.input_b = Tensor(1, c.model_dim);
    p.cls = Tensor(1, c.model_dim);
    p.pos = Tensor(c.max_seq_len + 1, c.model_dim);
    p.layers.resize(c.n_layers);
    for (LayerParams& l : p.layers) {
        l.wq = l.wk = l.wv = l.wo = Tensor(c.model_dim, c.model_dim);
        l.bq = l.bv = l.bo = Tensor(1, c.model_dim);
        l.ln1_g = l.ln1_b = l.ln2_g = l.ln2_b = Tensor(1, c.model_dim);
        l.w1 = Tensor(c.model_dim, c.ffn_dim);
        l.b1 = Tensor(1, c.ffn_dim);
        l.w2 = Tensor(c.ffn_dim, c.model_dim);
        l.b2 = Tensor(1, c.model_dim);
    }
    const std::size_t n_heads = (c.tasks == Task::both) ? 2 : 1;
    p.heads.resize(n_heads);
    for (HeadParams& h : p.heads) {
        h.ln_g = h.ln_b = Tensor(1, c.model_dim);
        h.w1 = Tensor(c.model_dim, c.ffn_dim);
        h.b1 = Tensor(1, c.ffn_dim);
        h.w2 = Tensor(c.ffn_dim, 1);
        h.b2 = Tensor(1, 1);
    }
    return p;
}

// Single declaration-order walk shared by the const and mutable visitors so
// the serialization order cannot drift between them.
template <typename Params, typename Fn>
void walk_params(Params& p, const Fn& fn) {
    fn("input_w", p.input_w);
    fn("input_b", p.input_b);
    fn("cls", p.cls);
    fn("pos", p.pos);
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        auto& l = p.layers[i];
        const std::string pre = "layer" + std::to_string(i) + ".";
        fn(pre + "wq", l.wq);
        fn(pre + "bq", l.bq);
        fn(pre + "wk", l.wk);
        fn(pre + "wv", l.wv);
        fn(pre + "bv", l.bv);
        fn(pre + "wo", l.wo);
        fn(pre + "bo", l.bo);
        fn(pre + "ln1_g", l.ln1_g);
        fn(pre + "ln1_b", l.ln1_b);
        fn(pre + "ln2_g", l.ln2_g);
        fn(pre + "ln2_b", l.ln2_b);
        fn(pre + "w1", l.w1);
        fn(pre + "b1", l.b1);
        fn(pre + "w2", l.w2);
        fn(pre + "b2", l.b2);
    }
    for (std::size_t i = 0; i < p.heads.size(); ++i) {
        auto& h = p.heads[i];
        // head naming depends on the head count: one head keeps its task name
        const std::string pre =
            (p.heads.size() == 2 ? (i == 0 ? std::string("head_angle.") : std::string("head_distance."))
                                 : std::string("head.")) ;
        fn(pre + "ln_g", h.ln_g);
        fn(pre + "ln_b", h.ln_b);
        fn(pre + "w1", h.w1);
        fn(pre + "b1", h.b1);
        fn(pre + "w2", h.w2);
        fn(pre + "b2", h.b2);
    }
}

template <typename Params, typename Fn>
void walk_buffers(Params& p, const Fn& fn) {
    fn("norm.sensor_mean", p.norm.sensor_mean);
    fn("norm.sensor_std", p.norm.sensor_std);
    fn("norm.target_mean", p.norm.target_mean);
    fn("norm.target_std", p.norm.target_std);
}

}  // namespace

void for_each_param(ModelParams& p, const std::function<void(const std::string&, Tensor&)>& fn) {
    walk_params(p, fn);
}
void for_each_param(const ModelParams& p,
                    const std::function<void(const std::string&, const Tensor&)>& fn) {
    walk_params(p, fn);
}
void for_each_buffer(ModelParams& p, const std::function<void(const std::string&, Tensor&)>& fn) {
    walk_buffers(p, fn);
}
void for_each_buffer(const ModelParams& p,
                     const std::function<void(const std::string&, const Tensor&)>& fn) {
    walk_buffers(p, fn);
}

std::size_t param_count(const ModelConfig& c) {
    validate_config(c);
    const ModelParams p = make_params(c);
    std::size_t n = 0;
    for_each_param(p, [&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
}

ModelParams init_params(const ModelConfig& c, std::uint64_t seed) {
    validate_config(c);
    ModelParams p = make_params(c);
    for_each_param(p, [&](const std::string& name, Tensor& t) {
        SplitMix64 rng(derive_seed(seed, "init:" + name));
        const bool is_matrix = t.rows() > 1 && name != "pos";
        const bool is_gain = name.ends_with("ln_g") || name.ends_with("ln1_g") ||
                             name.ends_with("ln2_g");
        if (is_gain) {
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = 1.0;
        } else if (is_matrix) {
            // fan-balanced normal init for projection matrices
            const double std = std::sqrt(2.0 / static_cast<double>(t.rows() + t.cols()));
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_normal(0.0, std);
        } else if (name == "cls" || name == "pos") {
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_normal(0.0, 0.02);
        }
        // biases and ln offsets stay zero
    });
    return p;
}

// ---- attention ----

std::vector<double> AttentionTrace::final_cls_series() const {
    if (layers.empty() || layers.back().heads.empty())
        throw ParamError("attention trace is empty");
    const LayerTrace& last = layers.back();
    const std::size_t T = last.heads[0].cls_frames.size();
    std::vector<double> out(T, 0.0);
    for (const HeadTrace& h : last.heads) {
        if (h.cls_frames.size() != T)
            throw ValidationError("attention trace heads disagree on frame count");
        for (std::size_t t = 0; t < T; ++t) out[t] += h.cls_frames[t];
    }
    for (double& v : out) v /= static_cast<double>(last.heads.size());
    return out;
}

WindowSpan window_span(std::size_t i, std::size_t n_frames, std::size_t window) {
    const std::size_t reach = window / 2;
    WindowSpan s;
    s.lo = (i > reach) ? i - reach : 1;
    s.hi = std::min(n_frames, i + reach);
    return s;
}

Tensor window_mask(std::size_t n_frames, std::size_t window) {
    const double ninf = -std::numeric_limits<double>::infinity();
    Tensor m(n_frames + 1, n_frames + 1, ninf);
    for (std::size_t j = 0; j <= n_frames; ++j) m.at(0, j) = 0.0;  // CLS attends everywhere
    for (std::size_t i = 1; i <= n_frames; ++i) {
        m.at(i, 0) = 0.0;  // every frame attends to CLS
        const WindowSpan s = window_span(i, n_frames, window);
        for (std::size_t j = s.lo; j <= s.hi; ++j) m.at(i, j) = 0.0;
    }
    return m;
}

namespace {

void fill_trace_from_rows(const Tensor& rows, std::size_t n_frames, HeadTrace& trace) {
    trace.cls_self = rows.at(0, 0);
    trace.cls_frames.assign(n_frames, 0.0);
    for (std::size_t t = 0; t < n_frames; ++t) trace.cls_frames[t] = rows.at(0, t + 1);
    trace.row_sums.assign(n_frames + 1, 0.0);
    for (std::size_t i = 0; i <= n_frames; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j <= n_frames; ++j) s += rows.at(i, j);
        trace.row_sums[i] = s;
    }
}

}  // namespace

NodeId attention_head(Tape& tape, NodeId q, NodeId k, NodeId v, std::size_t n_frames,
                      std::size_t window, AttentionKind kind, HeadTrace& trace,
                      Tensor* probe_rows) {
    const Tensor& qv = tape.value(q);
    const Tensor& kv = tape.value(k);
    const Tensor& vv = tape.value(v);
    if (!qv.same_shape(kv) || !qv.same_shape(vv))
        throw ShapeError("attention_head: q, k, v shapes differ");
    if (qv.rows() != n_frames + 1)
        throw ShapeError("attention_head: expected " + std::to_string(n_frames + 1) +
                         " rows (CLS + frames), got " + std::to_string(qv.rows()));
    if (window < 1) throw ParamError("attention window must be >= 1");
    const std::size_t dh = qv.cols();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    if (kind == AttentionKind::dense_reference) {
        const NodeId scores = tape.scale(tape.matmul(q, tape.transpose(k)), scale);
        const NodeId masked = tape.add(scores, tape.constant(window_mask(n_frames, window)));
        const NodeId probs = tape.softmax_rows(masked);
        fill_trace_from_rows(tape.value(probs), n_frames, trace);
        if (probe_rows) *probe_rows = tape.value(probs);
        return tape.matmul(probs, v);
    }

    // Fused O(window * n) kernel. Per query row the attended key set is CLS
    // plus a contiguous frame span; probabilities are kept (ragged, CLS
    // first) for the backward pass and the trace.
    std::vector<std::vector<double>> probs(n_frames + 1);
    Tensor out(n_frames + 1, dh);

    auto support_of = [n_frames, window](std::size_t i) -> WindowSpan {
        if (i == 0) return {1, n_frames};  // CLS row: every frame (CLS itself handled separately)
        return window_span(i, n_frames, window);
    };

    for (std::size_t i = 0; i <= n_frames; ++i) {
        const WindowSpan s = support_of(i);
        std::vector<double>& p = probs[i];
        p.resize(1 + (s.hi - s.lo + 1));
        // raw scaled scores, CLS first
        double mx = -std::numeric_limits<double>::infinity();
        {
            double dot = 0.0;
            for (std::size_t c = 0; c < dh; ++c) dot += qv.at(i, c) * kv.at(0, c);
            p[0] = dot * scale;
            mx = p[0];
        }
        for (std::size_t j = s.lo; j <= s.hi; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < dh; ++c) dot += qv.at(i, c) * kv.at(j, c);
            const double sc = dot * scale;
            p[1 + (j - s.lo)] = sc;
            mx = std::max(mx, sc);
        }
        double denom = 0.0;
        for (double& e : p) {
            e = std::exp(e - mx);
            denom += e;
        }
        for (double& e : p) e /= denom;
        // context = p-weighted sum of v rows
        for (std::size_t c = 0; c < dh; ++c) {
            double acc = p[0] * vv.at(0, c);
            for (std::size_t j = s.lo; j <= s.hi; ++j) acc += p[1 + (j - s.lo)] * vv.at(j, c);
            out.at(i, c) = acc;
        }
    }

    // trace + probe straight from the ragged distributions
    trace.cls_self = probs[0][0];
    trace.cls_frames.assign(n_frames, 0.0);
    for (std::size_t t = 0; t < n_frames; ++t) trace.cls_frames[t] = probs[0][1 + t];
    trace.row_sums.assign(n_frames + 1, 0.0);
    for (std::size_t i = 0; i <= n_frames; ++i) {
        double sum = 0.0;
        for (double e : probs[i]) sum += e;
        trace.row_sums[i] = sum;
    }
    if (probe_rows) {
        Tensor full(n_frames + 1, n_frames + 1);
        for (std::size_t i = 0; i <= n_frames; ++i) {
            const WindowSpan s = support_of(i);
            full.at(i, 0) = probs[i][0];
            for (std::size_t j = s.lo; j <= s.hi; ++j) full.at(i, j) = probs[i][1 + (j - s.lo)];
        }
        *probe_rows = std::move(full);
    }

    return tape.record(
        std::move(out), {q, k, v},
        [q, k, v, probs = std::move(probs), n_frames, window, dh, scale](Tape& t, NodeId self) {
            const Tensor& g = t.grad(self);
            const Tensor& qv = t.value(q);
            const Tensor& kv = t.value(k);
            const Tensor& vv = t.value(v);
            const bool need_q = t.requires_grad(q);
            const bool need_k = t.requires_grad(k);
            const bool need_v = t.requires_grad(v);
            Tensor* gq = need_q ? &t.grad_mut(q) : nullptr;
            Tensor* gk = need_k ? &t.grad_mut(k) : nullptr;
            Tensor* gv = need_v ? &t.grad_mut(v) : nullptr;

            std::vector<std::size_t> keys;
            std::vector<double> dp, ds;
            for (std::size_t i = 0; i <= n_frames; ++i) {
                const WindowSpan s =
                    (i == 0) ? WindowSpan{1, n_frames} : window_span(i, n_frames, window);
                const std::size_t m = 1 + (s.hi - s.lo + 1);
                keys.resize(m);
                keys[0] = 0;
                for (std::size_t j = s.lo; j <= s.hi; ++j) keys[1 + (j - s.lo)] = j;

                const std::vector<double>& p = probs[i];
                dp.assign(m, 0.0);
                for (std::size_t a = 0; a < m; ++a) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) dot += g.at(i, c) * vv.at(keys[a], c);
                    dp[a] = dot;
                }
                double pg = 0.0;
                for (std::size_t a = 0; a < m; ++a) pg += p[a] * dp[a];
                ds.assign(m, 0.0);
                for (std::size_t a = 0; a < m; ++a) ds[a] = p[a] * (dp[a] - pg);

                for (std::size_t a = 0; a < m; ++a) {
                    const std::size_t j = keys[a];
                    if (gq)
                        for (std::size_t c = 0; c < dh; ++c)
                            gq->at(i, c) += ds[a] * kv.at(j, c) * scale;
                    if (gk)
                        for (std::size_t c = 0; c < dh; ++c)
                            gk->at(j, c) += ds[a] * qv.at(i, c) * scale;
                    if (gv)
                        for (std::size_t c = 0; c < dh; ++c)
                            gv->at(j, c) += p[a] * g.at(i, c);
                }
            }
        });
}

// ---- forward graph ----

BoundParams bind_params(Tape& tape, const ModelParams& params, bool requires_grad) {
    BoundParams b;
    // Bind in for_each_param order so `ordered` lines up with optimizer
    // state and gradient collection.
    b.input_w = tape.leaf(params.input_w, requires_grad);
    b.input_b = tape.leaf(params.input_b, requires_grad);
    b.cls = tape.leaf(params.cls, requires_grad);
    b.pos = tape.leaf(params.pos, requires_grad);
    b.ordered = {b.input_w, b.input_b, b.cls, b.pos};
    for (const LayerParams& l : params.layers) {
        BoundLayer bl;
        bl.wq = tape.leaf(l.wq, requires_grad);
        bl.bq = tape.leaf(l.bq, requires_grad);
        bl.wk = tape.leaf(l.wk, requires_grad);
        bl.wv = tape.leaf(l.wv, requires_grad);
        bl.bv = tape.leaf(l.bv, requires_grad);
        bl.wo = tape.leaf(l.wo, requires_grad);
        bl.bo = tape.leaf(l.bo, requires_grad);
        bl.ln1_g = tape.leaf(l.ln1_g, requires_grad);
        bl.ln1_b = tape.leaf(l.ln1_b, requires_grad);
        bl.ln2_g = tape.leaf(l.ln2_g, requires_grad);
        bl.ln2_b = tape.leaf(l.ln2_b, requires_grad);
        bl.w1 = tape.leaf(l.w1, requires_grad);
        bl.b1 = tape.leaf(l.b1, requires_grad);
        bl.w2 = tape.leaf(l.w2, requires_grad);
        bl.b2 = tape.leaf(l.b2, requires_grad);
        for (NodeId id : {bl.wq, bl.bq, bl.wk, bl.wv, bl.bv, bl.wo, bl.bo, bl.ln1_g,
                          bl.ln1_b, bl.ln2_g, bl.ln2_b, bl.w1, bl.b1, bl.w2, bl.b2})
            b.ordered.push_back(id);
        b.layers.push_back(bl);
    }
    for (const HeadParams& h : params.heads) {
        BoundHead bh;
        bh.ln_g = tape.leaf(h.ln_g, requires_grad);
        bh.ln_b = tape.leaf(h.ln_b, requires_grad);
        bh.w1 = tape.leaf(h.w1, requires_grad);
        bh.b1 = tape.leaf(h.b1, requires_grad);
        bh.w2 = tape.leaf(h.w2, requires_grad);
        bh.b2 = tape.leaf(h.b2, requires_grad);
        for (NodeId id : {bh.ln_g, bh.ln_b, bh.w1, bh.b1, bh.w2, bh.b2})
            b.ordered.push_back(id);
        b.heads.push_back(bh);
    }
    return b;
}

Tensor shifted_sensors(const Tensor& sensors) {
    if (sensors.rows() < 1 || sensors.cols() != 3)
        throw ShapeError("shifted_sensors expects a T x 3 matrix");
    Tensor out(sensors.rows(), 3);
    for (std::size_t c = 0; c < 3; ++c) out.at(0, c) = sensors.at(0, c);
    for (std::size_t t = 1; t < sensors.rows(); ++t)
        for (std::size_t c = 0; c < 3; ++c) out.at(t, c) = sensors.at(t - 1, c);
    return out;
}

NodeId embed_frames(Tape& tape, const Tensor& scores, const Tensor& sensors_std,
                    const BoundParams& bound, const ModelConfig& config) {
    const std::size_t T = scores.rows();
    if (sensors_std.rows() != T)
        throw ShapeError("embed_frames: scores have " + std::to_string(T) +
                         " rows but sensors have " + std::to_string(sensors_std.rows()));
    if (sensors_std.cols() != 3) throw ShapeError("embed_frames: sensors must be T x 3");
    if (scores.cols() + 3 != config.input_dim)
        throw ShapeError("embed_frames: " + std::to_string(scores.cols()) +
                         " concept scores + 3 sensors != input_dim " +
                         std::to_string(config.input_dim));
    if (T > config.max_seq_len)
        throw ShapeError("embed_frames: T " + std::to_string(T) + " exceeds max_seq_len " +
                         std::to_string(config.max_seq_len));

    Tensor x(T, config.input_dim);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t j = 0; j < scores.cols(); ++j) x.at(t, j) = scores.at(t, j);
        for (std::size_t c = 0; c < 3; ++c) x.at(t, scores.cols() + c) = sensors_std.at(t, c);
    }
    const NodeId input = tape.constant(std::move(x));
    const NodeId projected = tape.add_row(tape.matmul(input, bound.input_w), bound.input_b);
    const NodeId with_cls = tape.concat_rows({bound.cls, projected});
    const NodeId pos_used = tape.slice_rows(bound.pos, 0, T + 1);
    return tape.add(with_cls, pos_used);
}

namespace {

NodeId multi_head_attention(Tape& tape, NodeId h_norm, const BoundLayer& layer,
                            const ModelConfig& config, std::size_t n_frames,
                            AttentionKind kind, LayerTrace& trace,
                            std::vector<Tensor>* probe_rows) {
    const std::size_t dh = config.model_dim / config.n_heads;
    const NodeId q_all = tape.add_row(tape.matmul(h_norm, layer.wq), layer.bq);
    const NodeId k_all = tape.matmul(h_norm, layer.wk);
    const NodeId v_all = tape.add_row(tape.matmul(h_norm, layer.wv), layer.bv);

    trace.heads.resize(config.n_heads);
    if (probe_rows) probe_rows->resize(config.n_heads);
    std::vector<NodeId> contexts;
    contexts.reserve(config.n_heads);
    for (std::size_t h = 0; h < config.n_heads; ++h) {
        const NodeId q = tape.slice_cols(q_all, h * dh, dh);
        const NodeId k = tape.slice_cols(k_all, h * dh, dh);
        const NodeId v = tape.slice_cols(v_all, h * dh, dh);
        contexts.push_back(attention_head(tape, q, k, v, n_frames, config.window, kind,
                                          trace.heads[h],
                                          probe_rows ? &(*probe_rows)[h] : nullptr));
    }
    const NodeId merged = (contexts.size() == 1) ? contexts[0] : tape.concat_cols(contexts);
    return tape.add_row(tape.matmul(merged, layer.wo), layer.bo);
}

}  // namespace

NodeId longformer_layer(Tape& tape, NodeId h, const BoundLayer& layer,
                        const ModelConfig& config, std::size_t n_frames, bool training,
                        SplitMix64* rng, AttentionKind kind, LayerTrace& trace,
                        std::vector<Tensor>* probe_rows) {
    SplitMix64* drop_rng = training ? rng : nullptr;

    const NodeId norm1 = tape.layer_norm(h, layer.ln1_g, layer.ln1_b);
    NodeId attn = multi_head_attention(tape, norm1, layer, config, n_frames, kind, trace,
                                       probe_rows);
    attn = tape.dropout(attn, config.dropout_rate, drop_rng);
    const NodeId h1 = tape.add(h, attn);

    const NodeId norm2 = tape.layer_norm(h1, layer.ln2_g, layer.ln2_b);
    NodeId ffn = tape.add_row(
        tape.matmul(tape.gelu(tape.add_row(tape.matmul(norm2, layer.w1), layer.b1)), layer.w2),
        layer.b2);
    ffn = tape.dropout(ffn, config.dropout_rate, drop_rng);
    return tape.add(h1, ffn);
}

NodeId mlp_head(Tape& tape, NodeId cls_state, const BoundHead& head, const ModelConfig& config,
                bool training, SplitMix64* rng) {
    const NodeId norm = tape.layer_norm(cls_state, head.ln_g, head.ln_b);
    const NodeId hidden = tape.gelu(tape.add_row(tape.matmul(norm, head.w1), head.b1));
    const NodeId dropped = tape.dropout(hidden, config.dropout_rate, training ? rng : nullptr);
    return tape.add_row(tape.matmul(dropped, head.w2), head.b2);
}

ForwardGraph build_forward(Tape& tape, const Tensor& scores, const Tensor& sensors_std,
                           const BoundParams& bound, const ModelConfig& config, bool training,
                           SplitMix64* rng, AttentionKind kind, AttentionProbe* probe) {
    const std::size_t T = scores.rows();
    ForwardGraph g;
    NodeId h = embed_frames(tape, scores, sensors_std, bound, config);
    g.trace.layers.resize(config.n_layers);
    if (probe) probe->rows.resize(config.n_layers);
    for (std::size_t i = 0; i < config.n_layers; ++i)
        h = longformer_layer(tape, h, bound.layers[i], config, T, training, rng, kind,
                             g.trace.layers[i], probe ? &probe->rows[i] : nullptr);
    g.cls_state = tape.slice_rows(h, 0, 1);
    g.head_outputs.reserve(bound.heads.size());
    for (const BoundHead& head : bound.heads)
        g.head_outputs.push_back(mlp_head(tape, g.cls_state, head, config, training, rng));
    return g;
}

ForwardResult forward(const DriveSequence& seq, const ConceptSet& set,
                      const ModelParams& params, const ModelConfig& config,
                      AttentionKind kind, AttentionProbe* probe) {
    validate_config(config);
    if (set.size() + 3 != config.input_dim)
        throw ShapeError("concept set size " + std::to_string(set.size()) +
                         " + 3 sensors != input_dim " + std::to_string(config.input_dim));

    const Tensor scores = concept_scores(seq.frame_embeddings, set);
    SensorStats stats;
    for (std::size_t c = 0; c < 3; ++c) {
        stats.mean[c] = params.norm.sensor_mean[c];
        stats.std[c] = params.norm.sensor_std[c];
    }
    const Tensor sensors = standardize_sensors(shifted_sensors(seq.sensors), stats);

    Tape tape;
    const BoundParams bound = bind_params(tape, params, /*requires_grad=*/false);
    ForwardGraph g = build_forward(tape, scores, sensors, bound, config, /*training=*/false,
                                   nullptr, kind, probe);

    ForwardResult result;
    result.trace = std::move(g.trace);
    std::size_t slot = 0;
    if (has_angle_head(config)) {
        const double std_out = tape.value(g.head_outputs[slot++]).item();
        result.predictions.angle =
            std_out * params.norm.target_std[0] + params.norm.target_mean[0];
    }
    if (has_distance_head(config)) {
        const double std_out = tape.value(g.head_outputs[slot++]).item();
        result.predictions.distance =
            std_out * params.norm.target_std[1] + params.norm.target_mean[1];
    }
    return result;
}

// ---- checkpoint ----

void save_checkpoint(const ModelParams& params, const ModelConfig& config,
                     const std::string& path) {
    validate_config(config);
    detail::ByteWriter w(path);
    w.magic("CGCK");
    w.u32(1);
    const std::string cfg = config_to_json(config);
    w.u32(static_cast<std::uint32_t>(cfg.size()));
    w.str(cfg);
    const auto dump = [&w](const std::string&, const Tensor& t) {
        w.u32(static_cast<std::uint32_t>(t.rows()));
        w.u32(static_cast<std::uint32_t>(t.cols()));
        for (std::size_t i = 0; i < t.size(); ++i) w.f64(t[i]);
    };
    for_each_param(params, dump);
    for_each_buffer(params, dump);
    w.close();
}

Checkpoint load_checkpoint(const std::string& path) {
    detail::ByteReader r(path);
    r.magic("CGCK");
    const std::uint64_t ver_at = r.offset();
    const std::uint32_t version = r.u32("version");
    if (version != 1)
        throw FormatError(path + ": unsupported version " + std::to_string(version), ver_at);
    const std::uint64_t len_at = r.offset();
    const std::uint32_t cfg_len = r.u32("config length");
    if (cfg_len > 1u << 20)
        throw FormatError(path + ": implausible config length " + std::to_string(cfg_len),
                          len_at);
    const std::string cfg_text = r.str(cfg_len, "config json");

    Checkpoint ck;
    ck.config = config_from_json(cfg_text);
    ck.params = make_params(ck.config);
    const auto load = [&r, &path](const std::string& name, Tensor& t) {
        const std::uint64_t at = r.offset();
        const std::uint32_t rows = r.u32("tensor rows");
        const std::uint32_t cols = r.u32("tensor cols");
        if (rows != t.rows() || cols != t.cols())
            throw FormatError(path + ": tensor " + name + " is " + std::to_string(rows) + "x" +
                                  std::to_string(cols) + ", expected " +
                                  std::to_string(t.rows()) + "x" + std::to_string(t.cols()),
                              at);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.f64("tensor value");
        if (!t.all_finite())
            throw ValidationError(path + ": tensor " + name + " contains NaN/Inf");
    };
    for_each_param(ck.params, load);
    for_each_buffer(ck.params, load);
    if (!r.at_end()) throw FormatError(path + ": trailing bytes after tensors", r.offset());
    return ck;
}

}  // namespace conceptdrive
