#pragma once

#include "kcfplm/nn.hpp"

#include <iosfwd>
#include <map>
#include <string>

namespace kcf::ckpt {

inline constexpr int kTensorFormatVersion = 1;

// Text tensor file:
//   kcfplm-tensors <version>
//   meta <key> <value>            (any number)
//   tensor <name> <rows> <cols>   followed by `rows` lines of `cols` numbers
//   end
struct TensorFile {
  std::map<std::string, std::string> meta;
  std::map<std::string, ad::Matrix> tensors;
};

void write_tensor_file(std::ostream& out, const TensorFile& file);
TensorFile read_tensor_file(std::istream& in);
void save_tensor_file(const std::string& path, const TensorFile& file);
TensorFile load_tensor_file(const std::string& path);

TensorFile capture(const nn::ParameterSet& params, std::map<std::string, std::string> meta = {});

// Copies tensors into matching parameters. Shape mismatches are input errors.
// With `require_all`, every parameter must be present in the file.
// Returns how many parameters were filled.
std::size_t apply(const TensorFile& file, nn::ParameterSet& params, bool require_all = true,
                  const std::string& prefix = "");

// Fills every parameter named "<prefix>.<rest>" from the tensor named <rest>.
// Used for encoder weights converted once and shared by several instances.
std::size_t apply_relative(const TensorFile& file, nn::ParameterSet& params, const std::string& prefix);

}  // namespace kcf::ckpt
