#include <cstring>

#include "fedbal/augment.hpp"
#include "fedbal/error.hpp"

namespace fedbal {

namespace {

Matrix vstack(const Matrix& top, const Matrix& bottom) {
    Matrix out(top.rows() + bottom.rows(), top.cols());
    std::memcpy(out.data(), top.data(), top.size() * sizeof(double));
    std::memcpy(out.data() + top.size(), bottom.data(), bottom.size() * sizeof(double));
    return out;
}

} // namespace

LabeledDataset balance(const LabeledDataset& data, BalanceMethod method,
                       const BalanceConfig& cfg, Rng& rng) {
    validate(data);
    const int minority = data.minority_label();
    const std::size_t n_min = data.count_label(minority);
    const std::size_t n_maj = data.size() - n_min;
    if (n_min == 0)
        throw DataError("balance: minority class is empty");

    LabeledDataset out = data;
    const std::size_t need = n_maj - n_min;
    if (need == 0)
        return out;

    switch (method) {
    case BalanceMethod::smote: {
        SmoteConfig sc = cfg.smote;
        sc.target = static_cast<long long>(need);
        out.append_rows(smote(data, sc, rng), minority, Provenance::synthetic);
        break;
    }
    case BalanceMethod::gan_minority: {
        TrainedGenerator gen = train_gan(data.rows_with_label(minority), cfg.gan, rng);
        out.append_rows(gen.sample(need, rng), minority, Provenance::synthetic);
        break;
    }
    case BalanceMethod::cgan: {
        TrainedGenerator gen = train_cgan(data, cfg.gan, rng);
        out.append_rows(gen.sample_conditioned(need, minority, rng), minority,
                        Provenance::synthetic);
        break;
    }
    case BalanceMethod::wgan_gp: {
        TrainedGenerator gen = train_wgan_gp(data.rows_with_label(minority), cfg.gan, rng);
        out.append_rows(gen.sample(need, rng), minority, Provenance::synthetic);
        break;
    }
    case BalanceMethod::smote_gan: {
        // interpolated rows enrich the generator's training set; by default
        // they are then dropped and the generator fills the whole quota
        const std::size_t smote_quota = cfg.keep_smote_rows ? need / 2 : need;
        SmoteConfig sc = cfg.smote;
        sc.target = static_cast<long long>(smote_quota);
        const Matrix smote_rows = smote(data, sc, rng);
        const Matrix enriched = vstack(data.rows_with_label(minority), smote_rows);
        TrainedGenerator gen = train_gan(enriched, cfg.gan, rng);
        if (cfg.keep_smote_rows) {
            out.append_rows(smote_rows, minority, Provenance::synthetic);
            out.append_rows(gen.sample(need - smote_quota, rng), minority,
                            Provenance::synthetic);
        } else {
            out.append_rows(gen.sample(need, rng), minority, Provenance::synthetic);
        }
        break;
    }
    }
    return out;
}

} // namespace fedbal
