#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "specklesim/linalg.hpp"
#include "specklesim/rng.hpp"

namespace spk {

// Two-stage physics-informed estimator. Stage I fits an encoder f_theta and
// a descriptor mapper g_phi under a cross-entropy representation loss;
// stage II freezes theta and fits an abundance head h_psi under the
// quantification loss. The architecture is deliberately shallow (one
// affine+tanh layer, affine+softmax mapper, affine+softplus head): the
// contract here is the losses and the freeze schedule, not network depth.

struct EstimatorParams {
    Matrix theta_w; // hidden x (dim X + dim I)
    std::vector<double> theta_b;
    Matrix phi_w; // descriptor x hidden
    std::vector<double> phi_b;
    Matrix psi_w; // abundance x hidden
    std::vector<double> psi_b;

    void validate() const {
        if (theta_w.rows != theta_b.size()) throw shape_error("params: theta bias mismatch");
        if (phi_w.cols != theta_w.rows) throw shape_error("params: phi/theta mismatch");
        if (phi_w.rows != phi_b.size()) throw shape_error("params: phi bias mismatch");
        if (psi_w.cols != 0 && psi_w.cols != theta_w.rows)
            throw shape_error("params: psi/theta mismatch");
        if (psi_w.rows != psi_b.size()) throw shape_error("params: psi bias mismatch");
        for (double v : theta_w.data)
            if (!std::isfinite(v)) throw parameter_error("params: non-finite theta");
    }
};

struct TrainingRow {
    std::vector<double> x;      // image-derived features X_n
    std::vector<double> prior;  // physics-prior features I_n
    std::vector<double> target; // descriptor distribution t_n, sums to 1
    std::vector<double> truth;  // ground-truth abundances c*_n, mg/mL
};

struct TrainingSet {
    std::vector<TrainingRow> rows;

    void validate() const {
        if (rows.empty()) throw parameter_error("training set: empty");
        const auto& first = rows[0];
        for (const auto& r : rows) {
            if (r.x.size() != first.x.size() || r.prior.size() != first.prior.size() ||
                r.target.size() != first.target.size() || r.truth.size() != first.truth.size())
                throw shape_error("training set: inconsistent row dimensions");
            double sum = 0.0;
            for (double t : r.target) {
                if (t < 0.0) throw parameter_error("training set: negative target weight");
                sum += t;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw parameter_error("training set: target distribution does not sum to 1");
        }
    }
};

enum class TrainStage { one, two };

struct TrainConfig {
    double learning_rate = 0.05;
    int epochs = 500;
    int batch_size = 0; // 0 or >= N: full batch
    uint64_t seed = 1;
    TrainStage stage = TrainStage::one;
    bool squared_qt_loss = false; // ablation: ||.||^2 instead of the printed ||.||

    void validate() const {
        if (learning_rate < 0.0) throw parameter_error("train: learning_rate must be >= 0");
        if (epochs < 1) throw parameter_error("train: epochs must be >= 1");
    }
};

inline std::vector<double> concat_inputs(const std::vector<double>& x,
                                         const std::vector<double>& prior) {
    std::vector<double> in(x);
    in.insert(in.end(), prior.begin(), prior.end());
    return in;
}

// h = tanh(theta_w [X; I] + theta_b)
inline std::vector<double> encode(const std::vector<double>& x, const std::vector<double>& prior,
                                  const Matrix& theta_w, const std::vector<double>& theta_b) {
    const std::vector<double> in = concat_inputs(x, prior);
    if (in.size() != theta_w.cols) throw shape_error("encode: input dimension mismatch");
    std::vector<double> h = matvec(theta_w, in);
    for (size_t i = 0; i < h.size(); ++i) h[i] = std::tanh(h[i] + theta_b[i]);
    return h;
}

// s = softmax(phi_w h + phi_b); non-negative, sums to one.
inline std::vector<double> map_descriptor(const std::vector<double>& h, const Matrix& phi_w,
                                          const std::vector<double>& phi_b) {
    std::vector<double> logits = matvec(phi_w, h);
    for (size_t i = 0; i < logits.size(); ++i) logits[i] += phi_b[i];
    const double peak = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double& v : logits) {
        v = std::exp(v - peak);
        denom += v;
    }
    for (double& v : logits) v /= denom;
    return logits;
}

// L_rep = -(1/N) sum_n sum_i t_{n,i} ln s_{n,i}
inline double loss_rep(const std::vector<std::vector<double>>& s_batch,
                       const std::vector<std::vector<double>>& t_batch) {
    if (s_batch.empty() || s_batch.size() != t_batch.size())
        throw parameter_error("loss_rep: empty or mismatched batch");
    double loss = 0.0;
    for (size_t n = 0; n < s_batch.size(); ++n) {
        if (s_batch[n].size() != t_batch[n].size())
            throw shape_error("loss_rep: row dimension mismatch");
        for (size_t i = 0; i < s_batch[n].size(); ++i) {
            if (s_batch[n][i] <= 0.0)
                throw domain_error("loss_rep: descriptor probabilities must be positive");
            loss -= t_batch[n][i] * std::log(s_batch[n][i]);
        }
    }
    return loss / static_cast<double>(s_batch.size());
}

inline double softplus(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// c = softplus(psi_w f_theta(X, I) + psi_b), non-negative by construction.
inline std::vector<double> estimate(const std::vector<double>& x, const std::vector<double>& prior,
                                    const Matrix& theta_w, const std::vector<double>& theta_b,
                                    const Matrix& psi_w, const std::vector<double>& psi_b) {
    const std::vector<double> h = encode(x, prior, theta_w, theta_b);
    std::vector<double> c = matvec(psi_w, h);
    for (size_t i = 0; i < c.size(); ++i) c[i] = softplus(c[i] + psi_b[i]);
    return c;
}

// L_qt = (1/2N) sum_n ||c_n - c*_n||  (squared variant behind the flag)
inline double loss_qt(const std::vector<std::vector<double>>& c_batch,
                      const std::vector<std::vector<double>>& truth_batch,
                      bool squared = false) {
    if (c_batch.empty() || c_batch.size() != truth_batch.size())
        throw parameter_error("loss_qt: empty or mismatched batch");
    double loss = 0.0;
    for (size_t n = 0; n < c_batch.size(); ++n) {
        if (c_batch[n].size() != truth_batch[n].size())
            throw shape_error("loss_qt: row dimension mismatch");
        double sq = 0.0;
        for (size_t i = 0; i < c_batch[n].size(); ++i) {
            const double d = c_batch[n][i] - truth_batch[n][i];
            sq += d * d;
        }
        loss += squared ? sq : std::sqrt(sq);
    }
    return loss / (2.0 * static_cast<double>(c_batch.size()));
}

namespace detail {

// Distance below which a sample sits on the L_qt kink (norm not
// differentiable at zero); such samples get a zero subgradient.
inline constexpr double kQtKinkEps = 1e-12;

struct Gradients {
    Matrix theta_w;
    std::vector<double> theta_b;
    Matrix phi_w;
    std::vector<double> phi_b;
    Matrix psi_w;
    std::vector<double> psi_b;
};

// Backprop for one stage-I sample; dL/dlogits = (s - t)/N for softmax + CE.
inline void accumulate_stage1(const TrainingRow& row, const EstimatorParams& p, double inv_n,
                              Gradients& g) {
    const std::vector<double> in = concat_inputs(row.x, row.prior);
    const std::vector<double> h = encode(row.x, row.prior, p.theta_w, p.theta_b);
    const std::vector<double> s = map_descriptor(h, p.phi_w, p.phi_b);

    const size_t k = s.size();
    const size_t hidden = h.size();
    std::vector<double> dlogit(k);
    for (size_t i = 0; i < k; ++i) dlogit[i] = (s[i] - row.target[i]) * inv_n;

    std::vector<double> dh(hidden, 0.0);
    for (size_t i = 0; i < k; ++i) {
        for (size_t j = 0; j < hidden; ++j) {
            g.phi_w.at(i, j) += dlogit[i] * h[j];
            dh[j] += p.phi_w.at(i, j) * dlogit[i];
        }
        g.phi_b[i] += dlogit[i];
    }
    for (size_t j = 0; j < hidden; ++j) {
        const double du = dh[j] * (1.0 - h[j] * h[j]);
        for (size_t c = 0; c < in.size(); ++c) g.theta_w.at(j, c) += du * in[c];
        g.theta_b[j] += du;
    }
}

// Backprop for one stage-II sample (theta frozen). Returns false when the
// sample sits exactly on the L_qt kink and contributes no gradient.
inline bool accumulate_stage2(const TrainingRow& row, const EstimatorParams& p, double inv_n,
                              bool squared, Gradients& g) {
    const std::vector<double> h = encode(row.x, row.prior, p.theta_w, p.theta_b);
    std::vector<double> pre = matvec(p.psi_w, h);
    for (size_t i = 0; i < pre.size(); ++i) pre[i] += p.psi_b[i];

    const size_t out = pre.size();
    std::vector<double> c(out), resid(out);
    double norm_sq = 0.0;
    for (size_t i = 0; i < out; ++i) {
        c[i] = softplus(pre[i]);
        resid[i] = c[i] - row.truth[i];
        norm_sq += resid[i] * resid[i];
    }

    // d/dc of (1/2N)||r||   is r / (2N ||r||);  of (1/2N)||r||^2  is r / N
    std::vector<double> dc(out);
    if (squared) {
        for (size_t i = 0; i < out; ++i) dc[i] = resid[i] * inv_n;
    } else {
        const double norm = std::sqrt(norm_sq);
        if (norm < kQtKinkEps) return false;
        for (size_t i = 0; i < out; ++i) dc[i] = resid[i] * inv_n / (2.0 * norm);
    }

    for (size_t i = 0; i < out; ++i) {
        const double dpre = dc[i] * sigmoid(pre[i]);
        for (size_t j = 0; j < h.size(); ++j) g.psi_w.at(i, j) += dpre * h[j];
        g.psi_b[i] += dpre;
    }
    return true;
}

inline void init_affine(Matrix& w, std::vector<double>& b, size_t rows, size_t cols, Rng& rng) {
    w = Matrix(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    for (double& v : w.data) v = rng.normal(0.0, scale);
    b.assign(rows, 0.0);
}

} // namespace detail

struct TraceEntry {
    int epoch = 0;
    double loss = 0.0;
};

struct TrainResult {
    EstimatorParams params;
    std::vector<TraceEntry> trace;
    double final_loss = 0.0;
};

inline double evaluate_loss_rep(const TrainingSet& set, const EstimatorParams& p) {
    std::vector<std::vector<double>> s_batch, t_batch;
    for (const auto& row : set.rows) {
        s_batch.push_back(
            map_descriptor(encode(row.x, row.prior, p.theta_w, p.theta_b), p.phi_w, p.phi_b));
        t_batch.push_back(row.target);
    }
    return loss_rep(s_batch, t_batch);
}

inline double evaluate_loss_qt(const TrainingSet& set, const EstimatorParams& p,
                               bool squared = false) {
    std::vector<std::vector<double>> c_batch, truth_batch;
    for (const auto& row : set.rows) {
        c_batch.push_back(estimate(row.x, row.prior, p.theta_w, p.theta_b, p.psi_w, p.psi_b));
        truth_batch.push_back(row.truth);
    }
    return loss_qt(c_batch, truth_batch, squared);
}

// Stage I: gradient descent on L_rep over (theta, phi). Deterministic given
// the seed; returns the best parameters seen, which by construction achieve
// a loss no greater than the initialization's.
inline TrainResult train_stage1(const TrainingSet& set, const TrainConfig& cfg,
                                size_t hidden_dim = 16) {
    set.validate();
    cfg.validate();
    if (cfg.stage != TrainStage::one) throw parameter_error("train_stage1: config stage must be I");

    const size_t in_dim = set.rows[0].x.size() + set.rows[0].prior.size();
    const size_t k = set.rows[0].target.size();

    Rng rng(splitmix64(cfg.seed ^ 0x57A6E1ull));
    EstimatorParams p;
    detail::init_affine(p.theta_w, p.theta_b, hidden_dim, in_dim, rng);
    detail::init_affine(p.phi_w, p.phi_b, k, hidden_dim, rng);
    p.psi_w = Matrix(0, 0);
    p.psi_b = {};

    const size_t n = set.rows.size();
    const size_t batch = cfg.batch_size <= 0 ? n : std::min<size_t>(cfg.batch_size, n);

    TrainResult result;
    result.params = p;
    double best = evaluate_loss_rep(set, p);
    result.trace.push_back({0, best});

    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (batch < n) { // deterministic shuffle per epoch
            Rng shuffle_rng(derive_stream_seed(cfg.seed, static_cast<uint64_t>(epoch), 0xB47C));
            for (size_t i = n; i > 1; --i)
                std::swap(order[i - 1], order[shuffle_rng.next_u64() % i]);
        }
        for (size_t start = 0; start < n; start += batch) {
            const size_t stop = std::min(n, start + batch);
            detail::Gradients g;
            g.theta_w = Matrix(hidden_dim, in_dim);
            g.theta_b.assign(hidden_dim, 0.0);
            g.phi_w = Matrix(k, hidden_dim);
            g.phi_b.assign(k, 0.0);
            const double inv = 1.0 / static_cast<double>(stop - start);
            for (size_t i = start; i < stop; ++i)
                detail::accumulate_stage1(set.rows[order[i]], p, inv, g);
            for (size_t i = 0; i < p.theta_w.data.size(); ++i)
                p.theta_w.data[i] -= cfg.learning_rate * g.theta_w.data[i];
            for (size_t i = 0; i < p.theta_b.size(); ++i)
                p.theta_b[i] -= cfg.learning_rate * g.theta_b[i];
            for (size_t i = 0; i < p.phi_w.data.size(); ++i)
                p.phi_w.data[i] -= cfg.learning_rate * g.phi_w.data[i];
            for (size_t i = 0; i < p.phi_b.size(); ++i)
                p.phi_b[i] -= cfg.learning_rate * g.phi_b[i];
        }
        const double loss = evaluate_loss_rep(set, p);
        if (!std::isfinite(loss))
            throw divergence_error("train_stage1: non-finite loss at epoch " +
                                   std::to_string(epoch));
        result.trace.push_back({epoch, loss});
        if (loss < best) {
            best = loss;
            result.params = p;
        }
    }
    result.final_loss = best;
    return result;
}

// Stage II: theta is frozen bit-for-bit; only (psi_w, psi_b) move.
inline TrainResult train_stage2(const TrainingSet& set, const EstimatorParams& frozen,
                                const TrainConfig& cfg) {
    set.validate();
    cfg.validate();
    if (cfg.stage != TrainStage::two)
        throw parameter_error("train_stage2: config stage must be II");

    const size_t hidden = frozen.theta_w.rows;
    const size_t out = set.rows[0].truth.size();
    const size_t n = set.rows.size();

    Rng rng(splitmix64(cfg.seed ^ 0x57A6E2ull));
    EstimatorParams p = frozen;
    detail::init_affine(p.psi_w, p.psi_b, out, hidden, rng);

    const size_t batch = cfg.batch_size <= 0 ? n : std::min<size_t>(cfg.batch_size, n);

    TrainResult result;
    result.params = p;
    double best = evaluate_loss_qt(set, p, cfg.squared_qt_loss);
    result.trace.push_back({0, best});

    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (batch < n) {
            Rng shuffle_rng(derive_stream_seed(cfg.seed, static_cast<uint64_t>(epoch), 0xB47D));
            for (size_t i = n; i > 1; --i)
                std::swap(order[i - 1], order[shuffle_rng.next_u64() % i]);
        }
        for (size_t start = 0; start < n; start += batch) {
            const size_t stop = std::min(n, start + batch);
            detail::Gradients g;
            g.psi_w = Matrix(out, hidden);
            g.psi_b.assign(out, 0.0);
            const double inv = 1.0 / static_cast<double>(stop - start);
            for (size_t i = start; i < stop; ++i)
                detail::accumulate_stage2(set.rows[order[i]], p, inv, cfg.squared_qt_loss, g);
            for (size_t i = 0; i < p.psi_w.data.size(); ++i)
                p.psi_w.data[i] -= cfg.learning_rate * g.psi_w.data[i];
            for (size_t i = 0; i < p.psi_b.size(); ++i)
                p.psi_b[i] -= cfg.learning_rate * g.psi_b[i];
        }
        const double loss = evaluate_loss_qt(set, p, cfg.squared_qt_loss);
        if (!std::isfinite(loss))
            throw divergence_error("train_stage2: non-finite loss at epoch " +
                                   std::to_string(epoch));
        result.trace.push_back({epoch, loss});
        if (loss < best) {
            best = loss;
            result.params = p;
        }
    }
    result.final_loss = best;
    return result;
}

enum class WhichLoss { rep, qt };

// Central-difference validation of the analytic gradients. Returns the
// maximum relative error over every trainable parameter of the stage that
// owns the loss. Stage-II rows sitting on the L_qt kink are excluded from
// the evaluation on both sides.
inline double grad_check(const EstimatorParams& params, const TrainingSet& set,
                         WhichLoss which, double eps) {
    if (eps < 1e-7 || eps > 1e-4)
        throw parameter_error("grad_check: eps must lie in [1e-7, 1e-4]");
    set.validate();

    TrainingSet active = set;
    if (which == WhichLoss::qt) {
        active.rows.clear();
        for (const auto& row : set.rows) {
            const auto c = estimate(row.x, row.prior, params.theta_w, params.theta_b,
                                    params.psi_w, params.psi_b);
            double norm_sq = 0.0;
            for (size_t i = 0; i < c.size(); ++i)
                norm_sq += (c[i] - row.truth[i]) * (c[i] - row.truth[i]);
            if (std::sqrt(norm_sq) >= detail::kQtKinkEps) active.rows.push_back(row);
        }
        if (active.rows.empty()) return 0.0; // every sample on the kink: nothing to check
    }

    const size_t n = active.rows.size();
    detail::Gradients g;
    g.theta_w = Matrix(params.theta_w.rows, params.theta_w.cols);
    g.theta_b.assign(params.theta_b.size(), 0.0);
    g.phi_w = Matrix(params.phi_w.rows, params.phi_w.cols);
    g.phi_b.assign(params.phi_b.size(), 0.0);
    g.psi_w = Matrix(params.psi_w.rows, params.psi_w.cols);
    g.psi_b.assign(params.psi_b.size(), 0.0);
    const double inv = 1.0 / static_cast<double>(n);
    for (const auto& row : active.rows) {
        if (which == WhichLoss::rep)
            detail::accumulate_stage1(row, params, inv, g);
        else
            detail::accumulate_stage2(row, params, inv, false, g);
    }

    // flatten the trainable parameters of the stage under test
    std::vector<double*> slots;
    std::vector<double> analytic;
    EstimatorParams work = params;
    auto add = [&](std::vector<double>& vals, const std::vector<double>& grads) {
        for (size_t i = 0; i < vals.size(); ++i) {
            slots.push_back(&vals[i]);
            analytic.push_back(grads[i]);
        }
    };
    if (which == WhichLoss::rep) {
        add(work.theta_w.data, g.theta_w.data);
        add(work.theta_b, g.theta_b);
        add(work.phi_w.data, g.phi_w.data);
        add(work.phi_b, g.phi_b);
    } else {
        add(work.psi_w.data, g.psi_w.data);
        add(work.psi_b, g.psi_b);
    }

    auto eval = [&]() {
        return which == WhichLoss::rep ? evaluate_loss_rep(active, work)
                                       : evaluate_loss_qt(active, work, false);
    };

    double max_rel = 0.0;
    for (size_t i = 0; i < slots.size(); ++i) {
        const double saved = *slots[i];
        *slots[i] = saved + eps;
        const double up = eval();
        *slots[i] = saved - eps;
        const double down = eval();
        *slots[i] = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-12});
        max_rel = std::max(max_rel, std::abs(numeric - analytic[i]) / denom);
    }
    return max_rel;
}

// FNV-1a digest over the encoder weights, the stage-II freeze witness.
inline uint64_t theta_digest(const EstimatorParams& p) {
    uint64_t h = 0xCBF29CE484222325ull;
    auto mix = [&h](const double* ptr, size_t count) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(ptr);
        for (size_t i = 0; i < count * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 0x100000001B3ull;
        }
    };
    mix(p.theta_w.data.data(), p.theta_w.data.size());
    mix(p.theta_b.data(), p.theta_b.size());
    return h;
}

} // namespace spk
