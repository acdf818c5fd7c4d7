#include "dsam/search/depth_slab.hpp"

#include "dsam/common/error.hpp"
#include "dsam/common/rng.hpp"

namespace dsam::search {

void DepthSlabConfig::validate() const {
  if (slabs == 0) throw ConfigError("slab.count: must be >= 1");
  if (extractor_filters.empty()) throw ConfigError("slab.filters: at least one conv is required");
  for (std::size_t f : extractor_filters)
    if (f == 0) throw ConfigError("slab.filters: filter counts must be >= 1");
  if (kernel == 0 || kernel % 2 == 0) throw ConfigError("slab.kernel: must be odd");
  if (fusion_width == 0) throw ConfigError("slab.fusion_width: must be >= 1");
  if (height < 2 || width < 2 || height % 2 != 0 || width % 2 != 0) {
    throw ConfigError("slab.height/slab.width: must be even and >= 2");
  }
}

nlohmann::json depth_slab_to_json(const DepthSlabConfig& c) {
  return {{"model", "depth_slab"},       {"slabs", c.slabs},   {"extractor_filters", c.extractor_filters},
          {"kernel", c.kernel},          {"batchnorm", c.batchnorm}, {"fusion_width", c.fusion_width},
          {"height", c.height},          {"width", c.width}};
}

DepthSlabConfig depth_slab_from_json(const nlohmann::json& j) {
  DepthSlabConfig c;
  try {
    c.slabs = j.at("slabs").get<std::size_t>();
    c.extractor_filters = j.at("extractor_filters").get<std::vector<std::size_t>>();
    c.kernel = j.at("kernel").get<std::size_t>();
    c.batchnorm = j.at("batchnorm").get<bool>();
    c.fusion_width = j.at("fusion_width").get<std::size_t>();
    c.height = j.at("height").get<std::size_t>();
    c.width = j.at("width").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("depth-slab JSON: ") + e.what());
  }
  c.validate();
  return c;
}

nn::Network build_depth_slab(const DepthSlabConfig& c, std::uint64_t seed) {
  c.validate();
  nn::Network net({c.slabs, c.height, c.width}, seed, depth_slab_to_json(c).dump());
  Rng init(derive_seed(seed, Stream::kInit));
  auto extractor = std::make_unique<nn::Sequential>("slab_extractor");
  std::size_t in = 1;
  for (std::size_t i = 0; i < c.extractor_filters.size(); ++i) {
    const std::string tag = "slab.conv" + std::to_string(i + 1);
    extractor->add(nn::Conv2d::same(in, c.extractor_filters[i], c.kernel, init, tag));
    if (c.batchnorm) {
      extractor->add(std::make_unique<nn::BatchNorm>(c.extractor_filters[i], nn::BatchNorm::kDefaultEps,
                                                     nn::BatchNorm::kDefaultMomentum, tag + ".bn"));
    }
    extractor->add(std::make_unique<nn::ActivationLayer>(nn::Activation::kRelu));
    in = c.extractor_filters[i];
  }
  extractor->add(std::make_unique<nn::MaxPool>(2));
  extractor->add(std::make_unique<nn::GlobalAvgPool>());
  net.add(std::make_unique<nn::SharedPerChannel>(std::move(extractor)));
  net.add(std::make_unique<nn::Dense>(c.slabs * c.feature_width(), c.fusion_width, init, "fusion"));
  net.add(std::make_unique<nn::ActivationLayer>(nn::Activation::kRelu));
  net.add(std::make_unique<nn::Dense>(c.fusion_width, 1, init, "out"));
  net.add(std::make_unique<nn::ActivationLayer>(nn::Activation::kSigmoid));
  net.validate();
  return net;
}

ct::Sample depth_slab_sample(const ct::Volume& v, const std::string& id, const DepthSlabConfig& c,
                             const ct::PreprocessOptions& base) {
  c.validate();
  if (c.slabs > v.depth) {
    throw ConfigError("slab.count: " + std::to_string(c.slabs) + " slabs exceed the volume depth " +
                      std::to_string(v.depth));
  }
  ct::PreprocessOptions opts = base;
  opts.slabs = c.slabs;
  opts.height = c.height;
  opts.width = c.width;
  return ct::preprocess_volume(v, id, opts).front();
}

namespace {

nn::Tensor run_prefix(nn::Network& net, const ct::Sample& sample, std::size_t layers) {
  if (sample.image.shape() != net.input_shape()) {
    throw ConfigError("depth-slab: sample " + nn::shape_string(sample.image.shape()) + " does not match the model input " +
                      nn::shape_string(net.input_shape()));
  }
  nn::Shape batched{1};
  batched.insert(batched.end(), sample.image.shape().begin(), sample.image.shape().end());
  nn::Tensor x(batched, sample.image.values());
  const nn::ForwardContext ctx{nn::Mode::kInference, nullptr};
  for (std::size_t i = 0; i < layers; ++i) x = net.layers().at(i).forward(x, ctx);
  return x;
}

}  // namespace

std::vector<double> slab_features(nn::Network& net, const ct::Sample& sample) {
  return run_prefix(net, sample, 1).values();
}

std::vector<double> depth_slab_features(nn::Network& net, const ct::Volume& v, const DepthSlabConfig& c,
                                        const ct::PreprocessOptions& base) {
  return run_prefix(net, depth_slab_sample(v, "volume", c, base), 3).values();
}

}  // namespace dsam::search
