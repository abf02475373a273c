#include "cvp/core/vin.hpp"

#include "cvp/core/error.hpp"

namespace cvp {

Vin Vin::parse(std::string_view raw)
{
    if (raw.size() != 17)
        throw Error(Errc::BadLength, "VIN must have 17 characters, got " + std::to_string(raw.size()));

    std::string value;
    value.reserve(17);
    for (char c : raw) {
        if (c >= 'a' && c <= 'z')
            c = static_cast<char>(c - 'a' + 'A');
        bool alnum = (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
        if (!alnum || c == 'I' || c == 'O' || c == 'Q')
            throw Error(Errc::ForbiddenCharacter, "character '" + std::string(1, c) + "' not allowed in VIN");
        value.push_back(c);
    }
    return Vin(std::move(value));
}

} // namespace cvp
