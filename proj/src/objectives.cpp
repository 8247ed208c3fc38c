#include "pointcal/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "pointcal/errors.hpp"

namespace pointcal {

Tensor cox_loss(const Tensor& risks, std::span<const SurvivalRecord> records) {
    if (records.empty()) throw ValidationError("cox_loss: no subjects");
    if (risks.cols() != 1 || risks.rows() != static_cast<int>(records.size())) {
        throw ShapeError("cox_loss: risks must be Nx1 aligned with records");
    }
    const int n = static_cast<int>(records.size());

    Tensor total;
    for (int i = 0; i < n; ++i) {
        if (!records[i].event) continue;
        std::vector<int> risk_set;
        for (int j = 0; j < n; ++j) {
            if (records[j].observed_time >= records[i].observed_time) risk_set.push_back(j);
        }
        // risk_set always contains i itself.
        Tensor in_set = gather_rows(risks, risk_set);
        double shift = risks.at(risk_set[0], 0);
        for (int j : risk_set) shift = std::max(shift, risks.at(j, 0));
        Tensor shifted = add(in_set, Tensor::constant(static_cast<int>(risk_set.size()), 1,
                                                      std::vector<double>(risk_set.size(), -shift)));
        Tensor sum = matmul(transpose(exp(shifted)),
                            Tensor::constant(static_cast<int>(risk_set.size()), 1,
                                             std::vector<double>(risk_set.size(), 1.0)));
        Tensor lse = add(log(sum), Tensor::scalar(shift));
        std::vector<int> self_id{i};
        Tensor term = add(lse, scale_by(gather_rows(risks, self_id), -1.0));
        total = total.defined() ? add(total, term) : term;
    }
    return total.defined() ? total : Tensor::scalar(0.0);
}

double concordance_index(std::span<const double> risks,
                         std::span<const SurvivalRecord> records) {
    if (risks.size() != records.size()) {
        throw ValidationError("concordance_index: risks and records must align");
    }
    const int n = static_cast<int>(records.size());
    double comparable = 0.0;
    double concordant = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            // Comparable: i strictly earlier and i had the event.
            if (!(records[i].event && records[i].observed_time < records[j].observed_time)) {
                continue;
            }
            comparable += 1.0;
            if (risks[i] > risks[j]) {
                concordant += 1.0;
            } else if (risks[i] == risks[j]) {
                concordant += 0.5;
            }
        }
    }
    if (comparable == 0.0) {
        throw ValidationError("concordance_index: no comparable pairs");
    }
    return concordant / comparable;
}

MetricReport classification_metrics(std::span<const int> predictions,
                                    std::span<const int> labels, int n_classes) {
    if (predictions.size() != labels.size()) {
        throw ValidationError("classification_metrics: prediction/label count mismatch");
    }
    if (predictions.empty()) throw ValidationError("classification_metrics: empty input");
    const int n = static_cast<int>(predictions.size());
    for (int i = 0; i < n; ++i) {
        if (predictions[i] < 0 || predictions[i] >= n_classes || labels[i] < 0 ||
            labels[i] >= n_classes) {
            throw ValidationError("classification_metrics: class index out of range");
        }
    }
    std::vector<double> tp(n_classes, 0.0), fp(n_classes, 0.0), fn(n_classes, 0.0);
    int hits = 0;
    for (int i = 0; i < n; ++i) {
        if (predictions[i] == labels[i]) {
            ++hits;
            tp[labels[i]] += 1.0;
        } else {
            fp[predictions[i]] += 1.0;
            fn[labels[i]] += 1.0;
        }
    }
    MetricReport report;
    report.accuracy = static_cast<double>(hits) / n;
    for (int c = 0; c < n_classes; ++c) {
        const double p_den = tp[c] + fp[c];
        const double r_den = tp[c] + fn[c];
        report.precision += p_den > 0.0 ? tp[c] / p_den : 0.0;
        report.recall += r_den > 0.0 ? tp[c] / r_den : 0.0;
    }
    report.precision /= n_classes;
    report.recall /= n_classes;
    const double pr = report.precision + report.recall;
    report.f1 = pr > 0.0 ? 2.0 * report.precision * report.recall / pr : 0.0;
    return report;
}

double scheduled_lr(double base, double decay, int interval, int epoch) {
    if (interval < 1) throw ValidationError("scheduled_lr: interval must be positive");
    return base * std::pow(decay, epoch / interval);
}

void AdamOptimizer::zero_grads(std::span<Tensor> params) {
    for (auto& p : params) p.zero_grad();
}

void AdamOptimizer::step(std::span<Tensor> params, double lr) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i].values().size(), 0.0);
            v_[i].assign(params[i].values().size(), 0.0);
        }
    }
    if (m_.size() != params.size()) {
        throw ValidationError("AdamOptimizer: parameter list changed between steps");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (size_t i = 0; i < params.size(); ++i) {
        auto grad = params[i].grad();
        auto& values = params[i].mutable_values();
        if (grad.size() != values.size() || m_[i].size() != values.size()) {
            throw ValidationError("AdamOptimizer: parameter shape changed between steps");
        }
        for (size_t k = 0; k < values.size(); ++k) {
            const double g = grad[k];
            if (!std::isfinite(g)) {
                throw NumericError("AdamOptimizer: non-finite gradient in '" +
                                   params[i].name() + "'");
            }
            m_[i][k] = cfg_.beta1 * m_[i][k] + (1.0 - cfg_.beta1) * g;
            v_[i][k] = cfg_.beta2 * v_[i][k] + (1.0 - cfg_.beta2) * g * g;
            const double m_hat = m_[i][k] / bc1;
            const double v_hat = v_[i][k] / bc2;
            values[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
            if (!std::isfinite(values[k])) {
                throw NumericError("AdamOptimizer: parameter '" + params[i].name() +
                                   "' became non-finite");
            }
        }
    }
}

}  // namespace pointcal
