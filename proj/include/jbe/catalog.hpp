#pragma once

// Closed taxonomy of modeled bytecode patterns and the statement classifier.
//
// A pattern is the triple (operation, data type, data size). The catalog
// holds the 174 legal triples; a PatternKey adds the device level.

#include <algorithm>
#include <array>
#include <cctype>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "jbe/errors.hpp"

namespace jbe {

enum class DataType : std::uint8_t { Int, Long, Float, Double, Reference };
enum class DataSize : std::uint8_t { Load, Constant, Bits32, Bits64, Reference };

// Operation levels, one per operation row of the published parameter table
// (same order).
enum class Operation : std::uint8_t {
  Addition,
  Division,
  Increase,
  Multiplication,
  Negation,
  Subtraction,
  Modulo,
  BitAnd,
  BitComplement,
  BitOr,
  BitXor,
  LeftBitshift,
  RightBitshift,
  LogicalRightBitshift,
  D2F,
  D2I,
  D2L,
  F2D,
  F2I,
  F2L,
  I2B,
  I2C,
  I2D,
  I2F,
  I2L,
  I2S,
  L2D,
  L2F,
  L2I,
  ArrayLength,
  ArrayLoad,
  ArrayStore,
  ArrayAllocation,
  ObjectAllocation,
  ObjectGetField,
  ObjectGetStaticField,
  ObjectPutField,
  ObjectPutStaticField,
  StaticMethodCall,
  NonStaticMethodCall,
  ReturnStatement,
  SwitchConsecutive,
  SwitchNonConsecutive,
  IfEqualReference,
  IfNonEqualReference,
  IfNonNullReference,
  IfNullReference,
  IfEqualNumeric,
  IfNonEqualNumeric,
  IfGreaterOrEqualNumeric,
  IfGreaterNumeric,
  IfLessOrEqualNumeric,
  IfLessNumeric,
  IfEqualIntNonzero,
  IfNonEqualIntNonzero,
  IfGreaterOrEqualIntNonzero,
  IfGreaterIntNonzero,
  IfLessOrEqualIntNonzero,
  IfLessIntNonzero,
  ElseBranch,
  VariableDeclaration,
};

inline constexpr std::size_t kOperationCount = 61;
inline constexpr std::size_t kDataTypeCount = 5;
inline constexpr std::size_t kDataSizeCount = 5;
inline constexpr std::size_t kCatalogSize = 174;

// Rows of the pattern-family table ("# Bytecode patterns" column).
enum class PatternFamily : std::uint8_t {
  Addition,
  BitOperations,
  Division,
  Increase,
  Multiplication,
  Negation,
  Subtraction,
  Modulo,
  IfStatements,
  SwitchCase,
  MethodCallAndReturn,
  VariableDeclaration,
  ObjectAllocationAndFieldAccess,
  ArrayAllocationAndOperations,
  PrimitiveTypeConversions,
};

inline constexpr std::size_t kPatternFamilyCount = 15;

struct OperationInfo {
  Operation op;
  std::string_view id;       // lower_snake_case, used in files
  std::string_view display;  // human-readable row label
  PatternFamily family;
};

namespace detail {
using F = PatternFamily;
using O = Operation;
inline constexpr std::array<OperationInfo, kOperationCount> kOperations{{
    {O::Addition, "addition", "Addition", F::Addition},
    {O::Division, "division", "Division", F::Division},
    {O::Increase, "increase", "Increase", F::Increase},
    {O::Multiplication, "multiplication", "Multiplication", F::Multiplication},
    {O::Negation, "negation", "Negation", F::Negation},
    {O::Subtraction, "subtraction", "Subtraction", F::Subtraction},
    {O::Modulo, "modulo", "Modulo", F::Modulo},
    {O::BitAnd, "bit_and", "Bit and", F::BitOperations},
    {O::BitComplement, "bit_complement", "Bit complement", F::BitOperations},
    {O::BitOr, "bit_or", "Bit or", F::BitOperations},
    {O::BitXor, "bit_xor", "Bit xor", F::BitOperations},
    {O::LeftBitshift, "left_bitshift", "Left bitshift", F::BitOperations},
    {O::RightBitshift, "right_bitshift", "Right bitshift", F::BitOperations},
    {O::LogicalRightBitshift, "logical_right_bitshift", "Logical right bitshift",
     F::BitOperations},
    {O::D2F, "d2f", "d2f", F::PrimitiveTypeConversions},
    {O::D2I, "d2i", "d2i", F::PrimitiveTypeConversions},
    {O::D2L, "d2l", "d2l", F::PrimitiveTypeConversions},
    {O::F2D, "f2d", "f2d", F::PrimitiveTypeConversions},
    {O::F2I, "f2i", "f2i", F::PrimitiveTypeConversions},
    {O::F2L, "f2l", "f2l", F::PrimitiveTypeConversions},
    {O::I2B, "i2b", "i2b", F::PrimitiveTypeConversions},
    {O::I2C, "i2c", "i2c", F::PrimitiveTypeConversions},
    {O::I2D, "i2d", "i2d", F::PrimitiveTypeConversions},
    {O::I2F, "i2f", "i2f", F::PrimitiveTypeConversions},
    {O::I2L, "i2l", "i2l", F::PrimitiveTypeConversions},
    {O::I2S, "i2s", "i2s", F::PrimitiveTypeConversions},
    {O::L2D, "l2d", "l2d", F::PrimitiveTypeConversions},
    {O::L2F, "l2f", "l2f", F::PrimitiveTypeConversions},
    {O::L2I, "l2i", "l2i", F::PrimitiveTypeConversions},
    {O::ArrayLength, "array_length", "Array length", F::ArrayAllocationAndOperations},
    {O::ArrayLoad, "array_load", "Array load", F::ArrayAllocationAndOperations},
    {O::ArrayStore, "array_store", "Array store", F::ArrayAllocationAndOperations},
    {O::ArrayAllocation, "array_allocation", "Array allocation",
     F::ArrayAllocationAndOperations},
    {O::ObjectAllocation, "object_allocation", "Object allocation",
     F::ObjectAllocationAndFieldAccess},
    {O::ObjectGetField, "object_get_field", "Object get field",
     F::ObjectAllocationAndFieldAccess},
    {O::ObjectGetStaticField, "object_get_static_field", "Object get static field",
     F::ObjectAllocationAndFieldAccess},
    {O::ObjectPutField, "object_put_field", "Object put field",
     F::ObjectAllocationAndFieldAccess},
    {O::ObjectPutStaticField, "object_put_static_field", "Object put static field",
     F::ObjectAllocationAndFieldAccess},
    {O::StaticMethodCall, "static_method_call", "Static method call",
     F::MethodCallAndReturn},
    {O::NonStaticMethodCall, "non_static_method_call", "Non-static method call",
     F::MethodCallAndReturn},
    {O::ReturnStatement, "return_statement", "return statement", F::MethodCallAndReturn},
    {O::SwitchConsecutive, "switch_consecutive", "Switch-case consecutive", F::SwitchCase},
    {O::SwitchNonConsecutive, "switch_non_consecutive", "Switch-case non-consecutive",
     F::SwitchCase},
    {O::IfEqualReference, "if_equal_reference", "if equal (references)", F::IfStatements},
    {O::IfNonEqualReference, "if_non_equal_reference", "if non-equal (references)",
     F::IfStatements},
    {O::IfNonNullReference, "if_non_null_reference", "if non-null (references)",
     F::IfStatements},
    {O::IfNullReference, "if_null_reference", "if null (references)", F::IfStatements},
    {O::IfEqualNumeric, "if_equal_numeric", "if equal (numerical data types)",
     F::IfStatements},
    {O::IfNonEqualNumeric, "if_non_equal_numeric", "if non-equal (numerical data types)",
     F::IfStatements},
    {O::IfGreaterOrEqualNumeric, "if_greater_or_equal_numeric",
     "if greater or equal (numerical data types)", F::IfStatements},
    {O::IfGreaterNumeric, "if_greater_numeric", "if greater (numerical data types)",
     F::IfStatements},
    {O::IfLessOrEqualNumeric, "if_less_or_equal_numeric",
     "if less or equal (numerical data types)", F::IfStatements},
    {O::IfLessNumeric, "if_less_numeric", "if less (numerical data types)", F::IfStatements},
    {O::IfEqualIntNonzero, "if_equal_int_nonzero", "if equal (int != 0)", F::IfStatements},
    {O::IfNonEqualIntNonzero, "if_non_equal_int_nonzero", "if non-equal (int != 0)",
     F::IfStatements},
    {O::IfGreaterOrEqualIntNonzero, "if_greater_or_equal_int_nonzero",
     "if greater or equal (int != 0)", F::IfStatements},
    {O::IfGreaterIntNonzero, "if_greater_int_nonzero", "if greater (int != 0)",
     F::IfStatements},
    {O::IfLessOrEqualIntNonzero, "if_less_or_equal_int_nonzero",
     "if less or equal (int != 0)", F::IfStatements},
    {O::IfLessIntNonzero, "if_less_int_nonzero", "if less (int != 0)", F::IfStatements},
    {O::ElseBranch, "else_branch", "else branch", F::IfStatements},
    {O::VariableDeclaration, "variable_declaration", "Variable declaration",
     F::VariableDeclaration},
}};

inline constexpr std::array<std::string_view, kDataTypeCount> kTypeIds{
    "int", "long", "float", "double", "reference"};
inline constexpr std::array<std::string_view, kDataTypeCount> kTypeDisplay{
    "int", "long", "float", "double", "Reference"};
inline constexpr std::array<std::string_view, kDataSizeCount> kSizeIds{
    "load", "constant", "bits32", "bits64", "reference"};
inline constexpr std::array<std::string_view, kDataSizeCount> kSizeDisplay{
    "Load", "Constant", "32-bit", "64-bit", "Reference"};
inline constexpr std::array<std::string_view, kPatternFamilyCount> kFamilyDisplay{
    "Addition",
    "Bit Operations",
    "Division",
    "Increase",
    "Multiplication",
    "Negation",
    "Subtraction",
    "Modulo",
    "If statements",
    "Switch case",
    "Method call & return",
    "Variable declaration",
    "Object allocation and field access operations",
    "Array allocation and array operations",
    "Primitive type conversions",
};
}  // namespace detail

inline const OperationInfo& info(Operation op) {
  return detail::kOperations[static_cast<std::size_t>(op)];
}
inline std::string_view to_id(Operation op) { return info(op).id; }
inline std::string_view to_id(DataType t) { return detail::kTypeIds[static_cast<std::size_t>(t)]; }
inline std::string_view to_id(DataSize s) { return detail::kSizeIds[static_cast<std::size_t>(s)]; }
inline std::string_view display_name(Operation op) { return info(op).display; }
inline std::string_view display_name(DataType t) {
  return detail::kTypeDisplay[static_cast<std::size_t>(t)];
}
inline std::string_view display_name(DataSize s) {
  return detail::kSizeDisplay[static_cast<std::size_t>(s)];
}
inline std::string_view display_name(PatternFamily f) {
  return detail::kFamilyDisplay[static_cast<std::size_t>(f)];
}

inline std::optional<Operation> parse_operation(std::string_view id) {
  for (const auto& o : detail::kOperations)
    if (o.id == id) return o.op;
  return std::nullopt;
}
inline std::optional<DataType> parse_data_type(std::string_view id) {
  for (std::size_t i = 0; i < kDataTypeCount; ++i)
    if (detail::kTypeIds[i] == id) return static_cast<DataType>(i);
  return std::nullopt;
}
inline std::optional<DataSize> parse_data_size(std::string_view id) {
  for (std::size_t i = 0; i < kDataSizeCount; ++i)
    if (detail::kSizeIds[i] == id) return static_cast<DataSize>(i);
  return std::nullopt;
}

// (type, size) pairs allowed by the operand encoding: ldc only carries 32-bit
// values, ldc2_w only 64-bit ones, and the reference size only applies to
// reference operands.
constexpr bool legal_type_size(DataType t, DataSize s) {
  switch (s) {
    case DataSize::Load:
    case DataSize::Constant:
      return true;
    case DataSize::Bits32:
      return t == DataType::Int || t == DataType::Float;
    case DataSize::Bits64:
      return t == DataType::Long || t == DataType::Double;
    case DataSize::Reference:
      return t == DataType::Reference;
  }
  return false;
}

struct PatternTriple {
  Operation operation{};
  DataType dtype{};
  DataSize dsize{};

  friend constexpr auto operator<=>(const PatternTriple&, const PatternTriple&) = default;
};

// Canonical descriptor `<operation>:<dtype>:<dsize>`.
inline std::string render(const PatternTriple& t) {
  std::string out(to_id(t.operation));
  out += ':';
  out += to_id(t.dtype);
  out += ':';
  out += to_id(t.dsize);
  return out;
}

struct PatternKey {
  PatternTriple triple;
  std::string device;

  friend auto operator<=>(const PatternKey&, const PatternKey&) = default;
};

// `<operation>:<dtype>:<dsize>@<device>`
inline std::string render(const PatternKey& k) { return render(k.triple) + "@" + k.device; }

class Catalog {
 public:
  struct Entry {
    PatternTriple triple;
    // Normalized mnemonic signature; empty when the pattern can only be named
    // by its descriptor (else branches).
    std::vector<std::string> signature;
  };

  static const Catalog& instance() {
    static const Catalog catalog;
    return catalog;
  }

  const std::vector<Entry>& entries() const noexcept { return entries_; }

  std::vector<PatternTriple> triples() const {
    std::vector<PatternTriple> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.triple);
    return out;
  }

  bool contains(const PatternTriple& t) const {
    return std::any_of(entries_.begin(), entries_.end(),
                       [&](const Entry& e) { return e.triple == t; });
  }

  std::size_t count(PatternFamily family) const {
    return static_cast<std::size_t>(
        std::count_if(entries_.begin(), entries_.end(),
                      [&](const Entry& e) { return info(e.triple.operation).family == family; }));
  }

 private:
  Catalog() { build(); }
  void build();

  std::vector<Entry> entries_;
};

namespace detail {

inline std::string type_prefix(DataType t) {
  switch (t) {
    case DataType::Int: return "i";
    case DataType::Long: return "l";
    case DataType::Float: return "f";
    case DataType::Double: return "d";
    case DataType::Reference: return "a";
  }
  return "?";
}

// Instruction that pushes an operand of the given type and size.
inline std::string push_operand(DataType t, DataSize s) {
  switch (s) {
    case DataSize::Load: return type_prefix(t) + "load";
    case DataSize::Constant: return type_prefix(t) + "const";
    case DataSize::Bits32: return "ldc";
    case DataSize::Bits64: return "ldc2_w";
    case DataSize::Reference: return "aload";
  }
  return "?";
}

inline constexpr std::array<DataType, 4> kPrimitiveTypes{DataType::Int, DataType::Long,
                                                         DataType::Float, DataType::Double};

inline DataSize wide_size(DataType t) {
  return (t == DataType::Long || t == DataType::Double) ? DataSize::Bits64 : DataSize::Bits32;
}

}  // namespace detail

inline void Catalog::build() {
  using detail::push_operand;
  using detail::type_prefix;
  using D = DataType;
  using S = DataSize;
  using O = Operation;

  auto add = [this](O op, D t, S s, std::vector<std::string> sig) {
    entries_.push_back(Entry{{op, t, s}, std::move(sig)});
  };

  // Two-operand arithmetic: one variable operand plus a second operand whose
  // size names the pattern (Load when both are variables).
  const std::array<std::pair<O, const char*>, 4> arith{
      {{O::Addition, "add"}, {O::Division, "div"}, {O::Multiplication, "mul"},
       {O::Subtraction, "sub"}}};
  for (const auto& [op, mnemonic] : arith) {
    for (D t : detail::kPrimitiveTypes) {
      const std::string p = type_prefix(t);
      for (S s : {S::Load, S::Constant, detail::wide_size(t)})
        add(op, t, s, {p + "load", push_operand(t, s), p + mnemonic, p + "store"});
    }
  }

  add(O::Increase, D::Int, S::Constant, {"iinc"});

  for (D t : detail::kPrimitiveTypes) {
    const std::string p = type_prefix(t);
    add(O::Negation, t, S::Load, {p + "load", p + "neg", p + "store"});
    add(O::Modulo, t, S::Load, {p + "load", p + "load", p + "rem", p + "store"});
  }

  for (D t : {D::Int, D::Long}) {
    const std::string p = type_prefix(t);
    const std::array<std::pair<O, const char*>, 3> logic{
        {{O::BitAnd, "and"}, {O::BitOr, "or"}, {O::BitXor, "xor"}}};
    for (const auto& [op, mnemonic] : logic)
      add(op, t, S::Load, {p + "load", p + "load", p + mnemonic, p + "store"});
    // ~x is x ^ -1; the all-ones mask is iconst_m1 for int, ldc2_w for long.
    add(O::BitComplement, t, S::Load,
        {p + "load", t == D::Int ? "iconst" : "ldc2_w", p + "xor", p + "store"});
    const std::array<std::pair<O, const char*>, 3> shifts{
        {{O::LeftBitshift, "shl"}, {O::RightBitshift, "shr"},
         {O::LogicalRightBitshift, "ushr"}}};
    // The shift distance is always an int.
    for (const auto& [op, mnemonic] : shifts)
      add(op, t, S::Load, {p + "load", "iload", p + mnemonic, p + "store"});
  }

  // Conditional branches: if<cond> against zero (or after a *cmp for
  // long/float/double), if_icmp<cond> between two ints, if_acmp/ifnull for
  // references.
  const std::array<std::pair<O, const char*>, 6> numeric_ifs{
      {{O::IfEqualNumeric, "eq"}, {O::IfNonEqualNumeric, "ne"},
       {O::IfGreaterOrEqualNumeric, "ge"}, {O::IfGreaterNumeric, "gt"},
       {O::IfLessOrEqualNumeric, "le"}, {O::IfLessNumeric, "lt"}}};
  for (const auto& [op, cond] : numeric_ifs) {
    for (D t : detail::kPrimitiveTypes) {
      const std::string p = type_prefix(t);
      const std::string branch = std::string("if") + cond;
      if (t == D::Int)
        add(op, t, S::Load, {"iload", branch});
      else
        add(op, t, S::Load, {p + "load", p + "load", p + "cmp", branch});
    }
  }
  const std::array<std::pair<O, const char*>, 6> int_ifs{
      {{O::IfEqualIntNonzero, "eq"}, {O::IfNonEqualIntNonzero, "ne"},
       {O::IfGreaterOrEqualIntNonzero, "ge"}, {O::IfGreaterIntNonzero, "gt"},
       {O::IfLessOrEqualIntNonzero, "le"}, {O::IfLessIntNonzero, "lt"}}};
  for (const auto& [op, cond] : int_ifs)
    add(op, D::Int, S::Load, {"iload", "iload", std::string("if_icmp") + cond});
  add(O::IfEqualReference, D::Reference, S::Reference, {"aload", "aload", "if_acmpeq"});
  add(O::IfNonEqualReference, D::Reference, S::Reference, {"aload", "aload", "if_acmpne"});
  add(O::IfNonNullReference, D::Reference, S::Reference, {"aload", "ifnonnull"});
  add(O::IfNullReference, D::Reference, S::Reference, {"aload", "ifnull"});
  add(O::ElseBranch, D::Int, S::Load, {});

  add(O::SwitchConsecutive, D::Int, S::Load, {"iload", "tableswitch"});
  add(O::SwitchNonConsecutive, D::Int, S::Load, {"iload", "lookupswitch"});

  add(O::StaticMethodCall, D::Int, S::Load, {"iload", "invokestatic"});
  add(O::NonStaticMethodCall, D::Int, S::Load, {"aload", "iload", "invokevirtual"});
  for (D t : detail::kPrimitiveTypes) {
    const std::string p = type_prefix(t);
    add(O::ReturnStatement, t, S::Load, {p + "load", p + "return"});
  }

  for (D t : detail::kPrimitiveTypes) {
    const std::string p = type_prefix(t);
    for (S s : {S::Load, S::Constant, detail::wide_size(t)})
      add(O::VariableDeclaration, t, s, {push_operand(t, s), p + "store"});
  }

  add(O::ObjectAllocation, D::Reference, S::Reference, {"new", "dup", "invokespecial", "astore"});
  for (D t : detail::kPrimitiveTypes) {
    const std::string p = type_prefix(t);
    add(O::ObjectGetField, t, S::Load, {"aload", "getfield", p + "store"});
    add(O::ObjectGetStaticField, t, S::Load, {"getstatic", p + "store"});
    add(O::ObjectPutField, t, S::Load, {"aload", p + "load", "putfield"});
    add(O::ObjectPutStaticField, t, S::Load, {p + "load", "putstatic"});
  }

  // Arrays of length one, allocated with a constant size.
  for (D t : detail::kPrimitiveTypes) {
    const std::string p = type_prefix(t);
    add(O::ArrayAllocation, t, S::Constant,
        {"iconst", "newarray:" + std::string(to_id(t)), "astore"});
    add(O::ArrayLoad, t, S::Load, {"aload", "iconst", p + "aload", p + "store"});
    add(O::ArrayStore, t, S::Load, {"aload", "iconst", p + "load", p + "astore"});
  }
  add(O::ArrayAllocation, D::Reference, S::Constant, {"iconst", "anewarray", "astore"});
  add(O::ArrayLoad, D::Reference, S::Reference, {"aload", "iconst", "aaload", "astore"});
  add(O::ArrayStore, D::Reference, S::Reference, {"aload", "iconst", "aload", "aastore"});
  add(O::ArrayLength, D::Reference, S::Reference, {"aload", "arraylength", "istore"});

  const std::array<std::tuple<O, D, D, const char*>, 15> conversions{{
      {O::D2F, D::Double, D::Float, "d2f"}, {O::D2I, D::Double, D::Int, "d2i"},
      {O::D2L, D::Double, D::Long, "d2l"},  {O::F2D, D::Float, D::Double, "f2d"},
      {O::F2I, D::Float, D::Int, "f2i"},    {O::F2L, D::Float, D::Long, "f2l"},
      {O::I2B, D::Int, D::Int, "i2b"},      {O::I2C, D::Int, D::Int, "i2c"},
      {O::I2D, D::Int, D::Double, "i2d"},   {O::I2F, D::Int, D::Float, "i2f"},
      {O::I2L, D::Int, D::Long, "i2l"},     {O::I2S, D::Int, D::Int, "i2s"},
      {O::L2D, D::Long, D::Double, "l2d"},  {O::L2F, D::Long, D::Float, "l2f"},
      {O::L2I, D::Long, D::Int, "l2i"},
  }};
  for (const auto& [op, from, to, mnemonic] : conversions)
    add(op, from, S::Load, {type_prefix(from) + "load", mnemonic, type_prefix(to) + "store"});

  std::stable_sort(entries_.begin(), entries_.end(),
                   [](const Entry& a, const Entry& b) { return a.triple < b.triple; });
}

// All legal triples in canonical (operation, type, size) order.
inline std::vector<PatternTriple> list_catalog() { return Catalog::instance().triples(); }

// Parses `<operation>:<dtype>:<dsize>`. Unknown identifiers raise
// UnknownPattern; a well-formed but non-catalog triple raises IllegalTriple.
inline PatternTriple parse_descriptor(std::string_view text) {
  const auto first = text.find(':');
  const auto second = first == std::string_view::npos ? first : text.find(':', first + 1);
  if (second == std::string_view::npos || text.find(':', second + 1) != std::string_view::npos)
    throw UnknownPattern("UnknownPattern: malformed descriptor '" + std::string(text) + "'");
  const auto op = parse_operation(text.substr(0, first));
  const auto t = parse_data_type(text.substr(first + 1, second - first - 1));
  const auto s = parse_data_size(text.substr(second + 1));
  if (!op || !t || !s)
    throw UnknownPattern("UnknownPattern: unknown level in '" + std::string(text) + "'");
  const PatternTriple triple{*op, *t, *s};
  if (!Catalog::instance().contains(triple))
    throw IllegalTriple("IllegalTriple: '" + std::string(text) + "' is not a modeled pattern");
  return triple;
}

// Parses `<operation>:<dtype>:<dsize>@<device>`.
inline PatternKey parse_key(std::string_view text) {
  const auto at = text.find('@');
  if (at == std::string_view::npos || at + 1 == text.size())
    throw UnknownPattern("UnknownPattern: missing '@<device>' in '" + std::string(text) + "'");
  return PatternKey{parse_descriptor(text.substr(0, at)), std::string(text.substr(at + 1))};
}

namespace detail {

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool is_number(std::string_view s) {
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) s.remove_prefix(1);
  if (s.empty() || !(std::isdigit(static_cast<unsigned char>(s.front())) || s.front() == '.'))
    return false;
  bool digit = false;
  for (char c : s) {
    if (std::isdigit(static_cast<unsigned char>(c)))
      digit = true;
    else if (c != '.' && c != 'e' && c != 'E' && c != '-' && c != 'L' && c != 'f' && c != 'd')
      return false;
  }
  return digit;
}

inline bool is_type_prefix(char c) {
  return c == 'i' || c == 'l' || c == 'f' || c == 'd' || c == 'a';
}

// Folds indexed/immediate spellings onto the signature vocabulary:
// iload_1 -> iload, iconst_m1 -> iconst, aconst_null -> aconst, ldc_w -> ldc,
// fcmpl/fcmpg -> fcmp, bipush/sipush -> iconst.
inline std::string normalize_mnemonic(std::string m) {
  for (auto& c : m) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (m == "bipush" || m == "sipush") return "iconst";
  if (m == "ldc_w") return "ldc";
  if (m == "fcmpl" || m == "fcmpg") return "fcmp";
  if (m == "dcmpl" || m == "dcmpg") return "dcmp";
  if (m == "lcmp") return m;
  if (m.size() >= 5 && is_type_prefix(m[0])) {
    for (std::string_view stem : {"load", "store", "const"}) {
      const std::string_view rest = std::string_view(m).substr(1);
      if (rest.substr(0, stem.size()) == stem &&
          (rest.size() == stem.size() || rest[stem.size()] == '_'))
        return m.substr(0, 1 + stem.size());
    }
  }
  return m;
}

inline std::optional<std::string> newarray_type(std::string t) {
  for (auto& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (t.rfind("t_", 0) == 0) t = t.substr(2);
  if (t == "int" || t == "long" || t == "float" || t == "double") return t;
  return std::nullopt;
}

inline const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> vocab = [] {
    std::vector<std::string> v;
    for (const auto& e : Catalog::instance().entries())
      for (const auto& m : e.signature) v.push_back(m.rfind("newarray", 0) == 0 ? "newarray" : m);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  }();
  return vocab;
}

inline bool known_mnemonic(const std::string& m) {
  const auto& v = vocabulary();
  return std::binary_search(v.begin(), v.end(), m);
}

}  // namespace detail

// Turns a whitespace-separated mnemonic sequence (javap-like text is fine:
// offsets, `#n` pool indices, numeric operands and `//` comments are skipped)
// into the normalized signature vocabulary.
inline std::vector<std::string> normalize_sequence(std::string_view stmt) {
  const auto tokens = detail::split_ws(stmt);
  std::vector<std::string> out;
  bool in_comment = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& raw = tokens[i];
    if (raw.rfind("//", 0) == 0) {
      in_comment = true;
      continue;
    }
    if (raw.front() == '#' || detail::is_number(raw) ||
        (raw.back() == ':' && detail::is_number(raw.substr(0, raw.size() - 1))) ||
        raw == ",")
      continue;
    std::string m = detail::normalize_mnemonic(raw);
    if (!detail::known_mnemonic(m)) {
      if (in_comment) continue;
      throw UnknownPattern("UnknownPattern: unsupported mnemonic '" + raw + "'");
    }
    in_comment = false;
    if (m == "newarray" && i + 1 < tokens.size()) {
      if (auto t = detail::newarray_type(tokens[i + 1])) {
        m += ":" + *t;
        ++i;
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

// Matches a normalized signature against a set of catalog entries. Exposed so
// alternative signature tables can be checked for ambiguity.
inline PatternTriple match_signature(const std::vector<std::string>& sig,
                                     const std::vector<Catalog::Entry>& entries,
                                     std::string_view source) {
  std::vector<PatternTriple> hits;
  for (const auto& e : entries) {
    if (e.signature.empty()) continue;
    if (e.signature == sig) {
      hits.push_back(e.triple);
      continue;
    }
    // A bare `newarray` (no element type operand) matches every primitive
    // array allocation.
    if (e.signature.size() == sig.size()) {
      bool same = true;
      for (std::size_t i = 0; i < sig.size() && same; ++i)
        same = e.signature[i] == sig[i] ||
               (sig[i] == "newarray" && e.signature[i].rfind("newarray:", 0) == 0);
      if (same) hits.push_back(e.triple);
    }
  }
  if (hits.empty())
    throw UnknownPattern("UnknownPattern: '" + std::string(source) +
                         "' matches no modeled pattern");
  if (hits.size() > 1) {
    std::string msg = "AmbiguousPattern: '" + std::string(source) + "' matches";
    for (const auto& h : hits) msg += " " + render(h);
    throw AmbiguousPattern(msg);
  }
  return hits.front();
}

// Classifies a canonical descriptor or a mnemonic sequence. Else branches are
// only reachable through their descriptor.
inline PatternTriple classify_statement(std::string_view stmt) {
  const auto tokens = detail::split_ws(stmt);
  if (tokens.size() == 1 && std::count(tokens[0].begin(), tokens[0].end(), ':') == 2)
    return parse_descriptor(tokens[0]);
  if (tokens.empty()) throw UnknownPattern("UnknownPattern: empty statement");
  return match_signature(normalize_sequence(stmt), Catalog::instance().entries(), stmt);
}

// Multiset of pattern keys with repeat counts.
struct ProgramManifest {
  std::map<PatternKey, long long> entries;

  bool empty() const noexcept { return entries.empty(); }
  long long total() const {
    long long n = 0;
    for (const auto& [k, c] : entries) n += c;
    return n;
  }
};

inline ProgramManifest classify_trace(const std::vector<std::string>& lines,
                                      const std::string& device) {
  ProgramManifest m;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      ++m.entries[PatternKey{classify_statement(lines[i]), device}];
    } catch (const UnknownPattern& e) {
      throw UnknownPattern("line " + std::to_string(i + 1) + ": " + e.what());
    } catch (const AmbiguousPattern& e) {
      throw AmbiguousPattern("line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return m;
}

}  // namespace jbe
