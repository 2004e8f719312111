#ifndef SPILLSC_VERSION_HPP
#define SPILLSC_VERSION_HPP

namespace spillsc {

inline constexpr const char* version = "1.0.0";

}  // namespace spillsc

#endif
