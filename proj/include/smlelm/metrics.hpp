#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smlelm/error.hpp"

namespace smlelm {

/// counts(t-1, p-1): samples of true class t predicted as p.
struct ConfusionMatrix {
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;

    int classes() const { return static_cast<int>(counts.rows()); }
    std::int64_t total() const { return counts.sum(); }
};

inline ConfusionMatrix confusion(const std::vector<int>& truth, const std::vector<int>& pred, int classes)
{
    if (truth.size() != pred.size())
        throw ContractError("confusion: truth and prediction lengths differ");
    if (classes < 1)
        throw ContractError("confusion: class count must be >= 1");
    ConfusionMatrix cm;
    cm.counts.setZero(classes, classes);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = truth[i];
        const int p = pred[i];
        if (t < 1 || t > classes || p < 1 || p > classes)
            throw ContractError("confusion: label outside 1.." + std::to_string(classes) + " at position "
                                + std::to_string(i));
        ++cm.counts(t - 1, p - 1);
    }
    return cm;
}

inline double oa(const ConfusionMatrix& cm)
{
    if (cm.total() <= 0)
        throw ContractError("oa: confusion matrix is empty");
    return static_cast<double>(cm.counts.trace()) / static_cast<double>(cm.total());
}

/// Recall of each true class.
inline std::vector<double> class_accuracies(const ConfusionMatrix& cm)
{
    std::vector<double> acc(static_cast<std::size_t>(cm.classes()));
    for (int k = 0; k < cm.classes(); ++k) {
        const std::int64_t row = cm.counts.row(k).sum();
        if (row == 0)
            throw ContractError("class " + std::to_string(k + 1) + " has no scored samples");
        acc[static_cast<std::size_t>(k)] = static_cast<double>(cm.counts(k, k)) / static_cast<double>(row);
    }
    return acc;
}

inline double aa(const ConfusionMatrix& cm)
{
    const auto acc = class_accuracies(cm);
    double s = 0.0;
    for (double a : acc)
        s += a;
    return s / static_cast<double>(acc.size());
}

/// Cohen's kappa. Chance agreement p_e = 1 is only defined when p_o = 1 too.
inline double kappa(const ConfusionMatrix& cm)
{
    const double po = oa(cm);
    const auto n = static_cast<double>(cm.total());
    double pe = 0.0;
    for (int k = 0; k < cm.classes(); ++k)
        pe += static_cast<double>(cm.counts.row(k).sum()) * static_cast<double>(cm.counts.col(k).sum());
    pe /= n * n;
    if (pe >= 1.0) {
        if (po >= 1.0)
            return 1.0;
        throw NumericError("kappa: chance agreement is 1 while observed agreement is below 1");
    }
    return (po - pe) / (1.0 - pe);
}

/// Table-style report in percent: "class,accuracy" rows for 1..M, then OA, AA, k.
inline std::string metrics_csv(const ConfusionMatrix& cm)
{
    std::string out = "class,accuracy\n";
    char buf[64];
    const auto acc = class_accuracies(cm);
    for (std::size_t k = 0; k < acc.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%zu,%.2f\n", k + 1, 100.0 * acc[k]);
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "OA,%.2f\nAA,%.2f\nk,%.2f\n", 100.0 * oa(cm), 100.0 * aa(cm), 100.0 * kappa(cm));
    out += buf;
    return out;
}

/// Counts with a header row of predicted classes.
inline std::string confusion_csv(const ConfusionMatrix& cm)
{
    std::string out = "true\\pred";
    for (int p = 1; p <= cm.classes(); ++p)
        out += "," + std::to_string(p);
    out += "\n";
    for (int t = 0; t < cm.classes(); ++t) {
        out += std::to_string(t + 1);
        for (int p = 0; p < cm.classes(); ++p)
            out += "," + std::to_string(cm.counts(t, p));
        out += "\n";
    }
    return out;
}

} // namespace smlelm
