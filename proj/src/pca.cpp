#include "canopy/pca.hpp"

namespace canopy {

PcaResult pca_fit_transform(const FeatureMatrix& features, double variance_target) {
    validate(features);
    PcaResult r;
    r.model = fit_pca(features.values, variance_target);
    r.reduced.crown_ids = features.crown_ids;
    r.reduced.source = features.source;
    r.reduced.values = r.model.transform(features.values);
    return r;
}

}  // namespace canopy
