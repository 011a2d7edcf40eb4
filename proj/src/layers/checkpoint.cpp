#include "layers/checkpoint.hpp"

#include <algorithm>
#include <json.hpp>

#include "core/errors.hpp"
#include "data/tensor_file.hpp"

namespace capsnet {

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  header["spec"] = nlohmann::ordered_json::parse(net.spec().to_json());
  header["seed"] = net.seed();
  std::vector<TensorRecord> records;
  for (const auto& p : net.parameters()) records.push_back({p.name, p.tensor});
  write_tensor_file(path, kCheckpointMagic, header.dump(), records);
}

std::unique_ptr<Network> load_checkpoint(const std::filesystem::path& path) {
  TensorContainer c = read_tensor_file(path, kCheckpointMagic);
  NetworkSpec spec;
  std::uint64_t seed = 0;
  try {
    auto header = nlohmann::json::parse(c.header);
    spec = NetworkSpec::from_json(header.at("spec").dump());
    seed = header.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::format, path.string() + ": bad checkpoint header: " + e.what());
  }
  auto net = std::make_unique<Network>(spec, seed);
  auto params = net->parameters();
  if (params.size() != c.tensors.size())
    raise(ErrorKind::format, path.string() + ": expected " + std::to_string(params.size()) + " tensors, found " +
                                 std::to_string(c.tensors.size()));
  for (auto& p : params) {
    const Tensor& src = c.get(p.name);
    if (src.shape() != p.tensor.shape())
      raise(ErrorKind::format, path.string() + ": parameter " + p.name + " has shape " + to_string(src.shape()) +
                                   ", network expects " + to_string(p.tensor.shape()));
    std::ranges::copy(src.values(), p.tensor.mutable_values().begin());
  }
  return net;
}

}  // namespace capsnet
